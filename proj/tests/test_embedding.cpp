#include <gtest/gtest.h>

#include <cmath>

#include "gatgpt/embedding.hpp"

using namespace gatgpt;

namespace {

Tensor3 random_tensor(std::size_t n, std::size_t t, std::size_t c, Rng& rng) {
    Tensor3 x(n, t, c);
    for (Eigen::Index i = 0; i < x.data().size(); ++i)
        x.data().data()[i] = rng.normal();
    return x;
}

EmbeddingParams random_embedding(std::size_t d, std::size_t c, std::size_t k, Rng& rng) {
    EmbeddingParams p = make_embedding(d, c, k);
    init_embedding(p, rng);
    for (Eigen::Index i = 0; i < p.bias.value.size(); ++i)
        p.bias.value.data()[i] = rng.normal();
    return p;
}

double w_at(const EmbeddingParams& p, std::size_t o, std::size_t c, std::size_t j) {
    return p.weight.value(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c * p.kernel_width() + j));
}

// Sliding dot product written out term by term.
double conv_oracle(const Tensor3& x, const EmbeddingParams& p, std::size_t n, std::size_t t, std::size_t o) {
    const long half = static_cast<long>(p.kernel_width() / 2);
    double acc = p.bias.value(0, static_cast<Eigen::Index>(o));
    for (std::size_t c = 0; c < x.width(); ++c)
        for (std::size_t j = 0; j < p.kernel_width(); ++j) {
            const long src = static_cast<long>(t) + static_cast<long>(j) - half;
            if (src < 0 || src >= static_cast<long>(x.steps()))
                continue;
            acc += w_at(p, o, c, j) * x(n, static_cast<std::size_t>(src), c);
        }
    return acc;
}

} // namespace

TEST(TokenEmbed, MatchesBruteForceOnHandSetKernel) {
    // k=3 on a T=4 sequence.
    EmbeddingParams p = make_embedding(2, 1, 3);
    p.weight.value << 1.0, 2.0, 3.0, //
        -1.0, 0.5, 0.0;
    p.bias.value << 0.0, 1.0;
    Tensor3 x(1, 4, 1);
    x(0, 0, 0) = 1.0;
    x(0, 1, 0) = 2.0;
    x(0, 2, 0) = 3.0;
    x(0, 3, 0) = 4.0;
    const Tensor3 y = token_embed(x, p);
    // Channel 0: 1*x[t-1] + 2*x[t] + 3*x[t+1].
    EXPECT_DOUBLE_EQ(y(0, 0, 0), 0.0 + 2.0 + 6.0);
    EXPECT_DOUBLE_EQ(y(0, 1, 0), 1.0 + 4.0 + 9.0);
    EXPECT_DOUBLE_EQ(y(0, 2, 0), 2.0 + 6.0 + 12.0);
    EXPECT_DOUBLE_EQ(y(0, 3, 0), 3.0 + 8.0 + 0.0);
    // Channel 1: -x[t-1] + 0.5*x[t] + 1.
    EXPECT_DOUBLE_EQ(y(0, 0, 1), 0.5 + 1.0);
    EXPECT_DOUBLE_EQ(y(0, 3, 1), -3.0 + 2.0 + 1.0);
}

TEST(TokenEmbed, MatchesBruteForceOnRandomInstances) {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.uniform_int(0, 3), t = 1 + rng.uniform_int(0, 9), c = 1 + rng.uniform_int(0, 2);
        const std::size_t k = 1 + 2 * rng.uniform_int(0, 3), d = 2 * (1 + rng.uniform_int(0, 4));
        const auto x = random_tensor(n, t, c, rng);
        const auto p = random_embedding(d, c, k, rng);
        const auto y = token_embed(x, p);
        ASSERT_EQ(y.nodes(), n);
        ASSERT_EQ(y.steps(), t);
        ASSERT_EQ(y.width(), d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t s = 0; s < t; ++s)
                for (std::size_t o = 0; o < d; ++o)
                    EXPECT_NEAR(y(i, s, o), conv_oracle(x, p, i, s, o), 1e-12);
    }
}

TEST(TokenEmbed, IdentityKernelAndZeroInput) {
    Rng rng(2);
    EmbeddingParams p = make_embedding(4, 4, 1);
    p.weight.value = Matrix::Identity(4, 4);
    const auto x = random_tensor(2, 5, 4, rng);
    EXPECT_TRUE(token_embed(x, p).data().isApprox(x.data()));

    const auto q = random_embedding(6, 2, 3, rng);
    EmbeddingParams zero_bias = q;
    zero_bias.bias.value.setZero();
    EXPECT_TRUE(token_embed(Tensor3(3, 7, 2), zero_bias).data().isZero(0.0));
}

TEST(TokenEmbed, ChannelMismatchRejected) {
    EXPECT_THROW(token_embed(Tensor3(1, 4, 3), make_embedding(4, 2, 3)), std::invalid_argument);
}

TEST(Embedding, ConfigValidation) {
    EXPECT_THROW(make_embedding(5, 1, 3), std::invalid_argument);
    EXPECT_THROW(make_embedding(4, 1, 2), std::invalid_argument);
    const auto p = make_embedding(8, 2, 3);
    EXPECT_EQ(p.weight.name, "embed.conv.weight");
    EXPECT_EQ(p.bias.name, "embed.conv.bias");
    EXPECT_EQ(p.weight.shape, (std::vector<std::size_t>{8, 2, 3}));
}

TEST(Embedding, InitWithinFanInBound) {
    Rng rng(3);
    auto p = make_embedding(16, 2, 3);
    init_embedding(p, rng);
    const double bound = 1.0 / std::sqrt(6.0);
    EXPECT_LE(p.weight.value.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(p.bias.value.cwiseAbs().maxCoeff(), bound);
    EXPECT_GT(p.weight.value.cwiseAbs().maxCoeff(), 0.5 * bound);
}

TEST(PositionalEncoding, ClosedFormValues) {
    const Matrix pe = positional_encoding(3, 4);
    for (Eigen::Index i = 0; i < 4; ++i)
        EXPECT_EQ(pe(0, i), i % 2 == 0 ? 0.0 : 1.0);
    EXPECT_NEAR(pe(1, 0), std::sin(1.0), 1e-15);
    EXPECT_NEAR(pe(1, 1), std::cos(1.0), 1e-15);
    EXPECT_NEAR(pe(1, 2), std::sin(std::pow(10000.0, -0.5)), 1e-15);
    EXPECT_NEAR(pe(1, 3), std::cos(std::pow(10000.0, -0.5)), 1e-15);
    EXPECT_LE(positional_encoding(200, 64).cwiseAbs().maxCoeff(), 1.0);
    EXPECT_THROW(positional_encoding(3, 5), std::invalid_argument);
}

TEST(Embed, AdditiveDecomposition) {
    Rng rng(4);
    const auto x = random_tensor(3, 6, 2, rng);
    const auto p = random_embedding(8, 2, 3, rng);
    const auto e = embed(x, p);
    const auto te = token_embed(x, p);
    const Matrix pe = positional_encoding(6, 8);
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t t = 0; t < 6; ++t)
            for (std::size_t o = 0; o < 8; ++o)
                EXPECT_NEAR(e(n, t, o) - pe(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(o)),
                            te(n, t, o), 1e-14);

    EmbeddingParams zero = make_embedding(8, 2, 3);
    const auto z = embed(Tensor3(2, 6, 2), zero);
    for (std::size_t n = 0; n < 2; ++n)
        EXPECT_TRUE(Matrix(z.node(n)).isApprox(pe));
}

TEST(Embed, LinearWithoutBias) {
    Rng rng(5);
    auto p = random_embedding(6, 2, 3, rng);
    p.bias.value.setZero();
    const auto x = random_tensor(2, 5, 2, rng);
    const auto y = random_tensor(2, 5, 2, rng);
    Tensor3 mix(2, 5, 2);
    mix.data() = 2.0 * x.data() - 3.0 * y.data();
    const Matrix pe = positional_encoding(5, 6);
    const auto strip = [&](const Tensor3& t) {
        Tensor3 out = embed(t, p);
        for (std::size_t n = 0; n < 2; ++n)
            out.node(n) -= pe;
        return out.data();
    };
    EXPECT_TRUE(strip(mix).isApprox(2.0 * strip(x) - 3.0 * strip(y), 1e-12));
}

TEST(EmbedBackward, MatchesFiniteDifferences) {
    Rng rng(6);
    const auto x = random_tensor(2, 5, 2, rng);
    auto p = random_embedding(4, 2, 3, rng);
    const auto probe = random_tensor(2, 5, 4, rng);
    const auto loss = [&](const EmbeddingParams& q) { return (embed(x, q).data().array() * probe.data().array()).sum(); };

    EmbeddingParams g = make_embedding(4, 2, 3);
    embed_backward(x, probe, p, g);
    const double h = 1e-4;
    for (Parameter* param : {&p.weight, &p.bias}) {
        const Parameter& grad = param == &p.weight ? g.weight : g.bias;
        for (Eigen::Index i = 0; i < param->value.size(); ++i) {
            const double keep = param->value.data()[i];
            param->value.data()[i] = keep + h;
            const double up = loss(p);
            param->value.data()[i] = keep - h;
            const double down = loss(p);
            param->value.data()[i] = keep;
            const double fd = (up - down) / (2 * h);
            EXPECT_NEAR(grad.value.data()[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << param->name << " " << i;
        }
    }
}
