#include "gatgpt/embedding.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gatgpt {

namespace {

// Row t holds the receptive field of step t: column c*k + j is x[t + j - k/2, c].
Matrix patches(const Tensor3& x, std::size_t n, std::size_t k) {
    const std::size_t steps = x.steps();
    const std::size_t channels = x.width();
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(channels * k));
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - pad;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps))
                continue;
            for (std::size_t c = 0; c < channels; ++c)
                p(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c * k + j)) =
                    x(n, static_cast<std::size_t>(src), c);
        }
    return p;
}

void check_input(const Tensor3& x, const EmbeddingParams& p) {
    if (x.width() != p.in_channels())
        throw std::invalid_argument("token embedding expects " + std::to_string(p.in_channels()) +
                                    " input channels, got " + std::to_string(x.width()));
    if (x.steps() == 0)
        throw std::invalid_argument("token embedding needs T >= 1");
}

} // namespace

EmbeddingParams make_embedding(std::size_t d_model, std::size_t in_channels, std::size_t kernel_width) {
    if (d_model == 0 || d_model % 2 != 0)
        throw std::invalid_argument("d_model must be positive and even, got " + std::to_string(d_model));
    if (kernel_width % 2 == 0)
        throw std::invalid_argument("kernel width must be odd, got " + std::to_string(kernel_width));
    if (in_channels == 0)
        throw std::invalid_argument("embedding needs at least one input channel");
    return {Parameter("embed.conv.weight", {d_model, in_channels, kernel_width}, false),
            Parameter("embed.conv.bias", {d_model}, false)};
}

void init_embedding(EmbeddingParams& p, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.in_channels() * p.kernel_width()));
    for (auto* param : {&p.weight, &p.bias})
        for (Eigen::Index i = 0; i < param->value.size(); ++i)
            param->value.data()[i] = rng.uniform(-bound, bound);
}

Tensor3 token_embed(const Tensor3& x, const EmbeddingParams& p) {
    check_input(x, p);
    Tensor3 out(x.nodes(), x.steps(), p.d_model());
    for (std::size_t n = 0; n < x.nodes(); ++n) {
        out.node(n).noalias() = patches(x, n, p.kernel_width()) * p.weight.value.transpose();
        out.node(n).rowwise() += p.bias.value.row(0);
    }
    return out;
}

Matrix positional_encoding(std::size_t steps, std::size_t d_model) {
    if (d_model == 0 || d_model % 2 != 0)
        throw std::invalid_argument("positional encoding needs an even d_model, got " + std::to_string(d_model));
    Matrix pe(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(d_model));
    for (std::size_t i = 0; i < d_model / 2; ++i) {
        const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
        for (std::size_t pos = 0; pos < steps; ++pos) {
            const double angle = static_cast<double>(pos) / freq;
            pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(2 * i)) = std::sin(angle);
            pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(2 * i + 1)) = std::cos(angle);
        }
    }
    return pe;
}

Tensor3 embed(const Tensor3& x, const EmbeddingParams& p) {
    Tensor3 out = token_embed(x, p);
    const Matrix pe = positional_encoding(x.steps(), p.d_model());
    for (std::size_t n = 0; n < out.nodes(); ++n)
        out.node(n) += pe;
    return out;
}

void embed_backward(const Tensor3& x, const Tensor3& grad_out, const EmbeddingParams& p, EmbeddingParams& grads) {
    check_input(x, p);
    for (std::size_t n = 0; n < x.nodes(); ++n) {
        const auto g = grad_out.node(n);
        grads.weight.value.noalias() += g.transpose() * patches(x, n, p.kernel_width());
        grads.bias.value.row(0) += g.colwise().sum();
    }
}

} // namespace gatgpt
