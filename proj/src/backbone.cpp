#include "gatgpt/backbone.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gatgpt {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

Linear make_linear(const std::string& prefix, std::size_t in, std::size_t out, bool frozen) {
    return {Parameter(prefix + ".weight", {in, out}, frozen), Parameter(prefix + ".bias", {out}, frozen)};
}

LayerNormParams make_layer_norm(const std::string& prefix, std::size_t d) {
    LayerNormParams ln{Parameter(prefix + ".scale", {d}, false), Parameter(prefix + ".shift", {d}, false)};
    ln.scale.value.setOnes();
    return ln;
}

Matrix affine(const Matrix& x, const Linear& p) {
    Matrix y = x * p.weight.value;
    y.rowwise() += p.bias.value.row(0);
    return y;
}

// Returns dLoss/dx; parameter gradients only for non-frozen tensors.
Matrix affine_backward(const Matrix& x, const Matrix& grad_out, const Linear& p, Linear& g) {
    if (!p.weight.frozen)
        g.weight.value.noalias() += x.transpose() * grad_out;
    if (!p.bias.frozen)
        g.bias.value.row(0) += grad_out.colwise().sum();
    return grad_out * p.weight.value.transpose();
}

Matrix layer_norm(const Matrix& x, const LayerNormParams& p, LayerNormCache* cache) {
    const auto d = static_cast<double>(x.cols());
    Matrix normalized(x.rows(), x.cols());
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).sum() / d;
        const double var = (x.row(r).array() - mean).square().sum() / d;
        inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
        normalized.row(r) = (x.row(r).array() - mean) * inv_std(r);
    }
    Matrix y = normalized.array().rowwise() * p.scale.value.row(0).array();
    y.rowwise() += p.shift.value.row(0);
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& grad_out, const LayerNormParams& p,
                           LayerNormParams& g) {
    if (!p.scale.frozen)
        g.scale.value.row(0) += (grad_out.array() * cache.normalized.array()).colwise().sum().matrix();
    if (!p.shift.frozen)
        g.shift.value.row(0) += grad_out.colwise().sum();
    const auto d = static_cast<double>(grad_out.cols());
    const Matrix dxhat = grad_out.array().rowwise() * p.scale.value.row(0).array();
    Matrix dx(grad_out.rows(), grad_out.cols());
    for (Eigen::Index r = 0; r < dx.rows(); ++r) {
        const double mean_d = dxhat.row(r).sum() / d;
        const double mean_dx = dxhat.row(r).dot(cache.normalized.row(r)) / d;
        dx.row(r) = cache.inv_std(r) *
                    (dxhat.row(r).array() - mean_d - cache.normalized.row(r).array() * mean_dx).matrix();
    }
    return dx;
}

void fill_normal(Parameter& p, Rng& rng, double sd) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i)
        p.value.data()[i] = sd * rng.normal();
}

void fill_uniform(Parameter& p, Rng& rng, double bound) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i)
        p.value.data()[i] = rng.uniform(-bound, bound);
}

} // namespace

// ---- configuration and parameters ----------------------------------------------

void ModelConfig::validate() const {
    const auto fail = [](const std::string& what) { throw std::invalid_argument("invalid model config: " + what); };
    if (layers == 0)
        fail("layers must be >= 1");
    if (d_model == 0 || d_model % 2 != 0)
        fail("d_model must be positive and even");
    if (n_heads == 0 || d_model % n_heads != 0)
        fail("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    if (gat_heads == 0)
        fail("gat_heads must be >= 1");
    if (gat_head_dim() == 0 || gat_heads * gat_head_dim() != d_model)
        fail("gat_heads * d_head must equal d_model (" + std::to_string(d_model) + ")");
    if (in_channels == 0 || out_channels == 0)
        fail("channel counts must be positive");
    if (kernel_width == 0 || kernel_width % 2 == 0)
        fail("kernel_width must be odd");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
        fail("leaky_slope must lie in (0, 1)");
}

void ModelParams::for_each(const std::function<void(Parameter&)>& fn) {
    fn(embedding.weight);
    fn(embedding.bias);
    for (auto& h : gat.heads) {
        fn(h.weight);
        fn(h.attention);
    }
    for (auto& b : blocks) {
        for (Linear* l : {&b.q, &b.k, &b.v, &b.o}) {
            fn(l->weight);
            fn(l->bias);
        }
        for (Linear* l : {&b.ff1, &b.ff2}) {
            fn(l->weight);
            fn(l->bias);
        }
        for (LayerNormParams* ln : {&b.ln1, &b.ln2}) {
            fn(ln->scale);
            fn(ln->shift);
        }
    }
    fn(head.weight);
    fn(head.bias);
}

void ModelParams::for_each(const std::function<void(const Parameter&)>& fn) const {
    const_cast<ModelParams*>(this)->for_each([&](Parameter& p) { fn(p); });
}

std::size_t ModelParams::trainable_count() const {
    std::size_t n = 0;
    for_each([&](const Parameter& p) {
        if (!p.frozen)
            n += p.numel();
    });
    return n;
}

std::size_t ModelParams::total_count() const {
    std::size_t n = 0;
    for_each([&](const Parameter& p) { n += p.numel(); });
    return n;
}

ModelParams make_model(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    p.embedding = make_embedding(config.d_model, config.model_in_channels(), config.kernel_width);
    p.gat = make_gat(config.d_model, config.gat_head_dim(), config.gat_heads, config.leaky_slope);
    const std::size_t d = config.d_model;
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::string prefix = "block" + std::to_string(l) + ".";
        BlockParams b;
        b.q = make_linear(prefix + "attn.q", d, d, true);
        b.k = make_linear(prefix + "attn.k", d, d, true);
        b.v = make_linear(prefix + "attn.v", d, d, true);
        b.o = make_linear(prefix + "attn.o", d, d, true);
        b.ff1 = make_linear(prefix + "ff.1", d, config.ff_hidden(), true);
        b.ff2 = make_linear(prefix + "ff.2", config.ff_hidden(), d, true);
        b.ln1 = make_layer_norm(prefix + "ln1", d);
        b.ln2 = make_layer_norm(prefix + "ln2", d);
        p.blocks.push_back(std::move(b));
    }
    p.head = make_linear("head", d, config.out_channels, false);
    return p;
}

ModelParams zeros_like(const ModelParams& p) {
    ModelParams z = p;
    z.for_each([](Parameter& t) { t.value.setZero(); });
    return z;
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p = make_model(config);
    Rng rng(seed);
    init_embedding(p.embedding, rng);
    init_gat(p.gat, rng);
    // GPT-2 style: N(0, 0.02), residual projections scaled by 1/sqrt(2L).
    const double residual_sd = kInitStd / std::sqrt(2.0 * static_cast<double>(config.layers));
    for (auto& b : p.blocks) {
        fill_normal(b.q.weight, rng, kInitStd);
        fill_normal(b.k.weight, rng, kInitStd);
        fill_normal(b.v.weight, rng, kInitStd);
        fill_normal(b.o.weight, rng, residual_sd);
        fill_normal(b.ff1.weight, rng, kInitStd);
        fill_normal(b.ff2.weight, rng, residual_sd);
    }
    const double head_bound = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    fill_uniform(p.head.weight, rng, head_bound);
    fill_uniform(p.head.bias, rng, head_bound);
    p.for_each([](Parameter& t) {
        for (Eigen::Index i = 0; i < t.value.size(); ++i)
            t.value.data()[i] = static_cast<double>(static_cast<float>(t.value.data()[i]));
    });
    return p;
}

std::size_t expected_trainable_count(const ModelConfig& c) {
    const std::size_t d = c.d_model;
    const std::size_t embedding = d * c.model_in_channels() * c.kernel_width + d;
    const std::size_t gat = c.gat_heads * (d * c.gat_head_dim() + 2 * c.gat_head_dim());
    const std::size_t norms = c.layers * 2 * (2 * d);
    const std::size_t head = d * c.out_channels + c.out_channels;
    return embedding + gat + norms + head;
}

// ---- activations ----------------------------------------------------------------

namespace {

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)

double gelu_from_tanh(double x, double th) {
    return 0.5 * x * (1.0 + th);
}

double gelu_derivative_from_tanh(double x, double th) {
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

} // namespace

double gelu(double x) {
    return gelu_from_tanh(x, std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

double gelu_derivative(double x) {
    return gelu_derivative_from_tanh(x, std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

// ---- backbone ---------------------------------------------------------------------

Tensor3 backbone_forward(const Tensor3& x, const std::vector<BlockParams>& blocks, std::size_t n_heads,
                         BackboneCache* cache, std::vector<std::vector<Matrix>>* probs) {
    const std::size_t nodes = x.nodes();
    const std::size_t steps = x.steps();
    const std::size_t d = x.width();
    for (const auto& b : blocks)
        if (b.q.weight.shape.at(0) != d)
            throw std::invalid_argument("backbone expects width " + std::to_string(b.q.weight.shape.at(0)) +
                                        ", input is " + x.shape_string());
    if (n_heads == 0 || d % n_heads != 0)
        throw std::invalid_argument("backbone width must be divisible by the head count");
    const std::size_t dk = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    const auto T = static_cast<Eigen::Index>(steps);
    const auto DK = static_cast<Eigen::Index>(dk);

    if (cache) {
        cache->nodes = nodes;
        cache->steps = steps;
        cache->blocks.assign(blocks.size(), BlockCache());
    }
    if (probs)
        probs->assign(blocks.size(), std::vector<Matrix>());

    Matrix h = x.data();
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const BlockParams& b = blocks[l];
        BlockCache local;
        BlockCache& c = cache ? cache->blocks[l] : local;
        c.input = h;
        c.ln1_out = layer_norm(h, b.ln1, &c.ln1);
        c.q = affine(c.ln1_out, b.q);
        c.k = affine(c.ln1_out, b.k);
        c.v = affine(c.ln1_out, b.v);
        c.attn_concat.resize(h.rows(), h.cols());
        c.probs.assign(nodes * n_heads, Matrix());
        for (std::size_t n = 0; n < nodes; ++n) {
            const auto r0 = static_cast<Eigen::Index>(n * steps);
            for (std::size_t hd = 0; hd < n_heads; ++hd) {
                const auto c0 = static_cast<Eigen::Index>(hd * dk);
                const auto q = c.q.block(r0, c0, T, DK);
                const auto k = c.k.block(r0, c0, T, DK);
                const auto v = c.v.block(r0, c0, T, DK);
                Matrix p = (q * k.transpose()) * scale;
                for (Eigen::Index i = 0; i < T; ++i) {
                    // Causal: position i sees 0..i.
                    const double peak = p.row(i).head(i + 1).maxCoeff();
                    double total = 0.0;
                    for (Eigen::Index j = 0; j <= i; ++j) {
                        p(i, j) = std::exp(p(i, j) - peak);
                        total += p(i, j);
                    }
                    p.row(i).head(i + 1) /= total;
                    p.row(i).tail(T - i - 1).setZero();
                }
                c.attn_concat.block(r0, c0, T, DK).noalias() = p * v;
                c.probs[n * n_heads + hd] = std::move(p);
            }
        }
        c.mid = h + affine(c.attn_concat, b.o);
        c.ln2_out = layer_norm(c.mid, b.ln2, &c.ln2);
        c.ff_pre = affine(c.ln2_out, b.ff1);
        c.ff_tanh = (kGeluC * (c.ff_pre.array() + 0.044715 * c.ff_pre.array().cube())).tanh().matrix();
        c.ff_act = c.ff_pre.binaryExpr(c.ff_tanh, [](double v, double th) { return gelu_from_tanh(v, th); });
        h = c.mid + affine(c.ff_act, b.ff2);
        if (probs)
            (*probs)[l] = c.probs;
    }
    Tensor3 out(nodes, steps, d);
    out.data() = std::move(h);
    return out;
}

Tensor3 backbone_backward(const BackboneCache& cache, const Tensor3& grad_out, const std::vector<BlockParams>& blocks,
                          std::size_t n_heads, std::vector<BlockParams>& grads) {
    const std::size_t nodes = cache.nodes;
    const std::size_t steps = cache.steps;
    const std::size_t d = grad_out.width();
    const std::size_t dk = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    const auto T = static_cast<Eigen::Index>(steps);
    const auto DK = static_cast<Eigen::Index>(dk);

    Matrix grad = grad_out.data();
    for (std::size_t li = blocks.size(); li-- > 0;) {
        const BlockParams& b = blocks[li];
        const BlockCache& c = cache.blocks[li];
        BlockParams& g = grads[li];

        // Feed-forward branch.
        Matrix d_act = affine_backward(c.ff_act, grad, b.ff2, g.ff2);
        Matrix d_pre = d_act.array() *
                       c.ff_pre.binaryExpr(c.ff_tanh, [](double v, double th) { return gelu_derivative_from_tanh(v, th); })
                           .array();
        Matrix d_ln2 = affine_backward(c.ln2_out, d_pre, b.ff1, g.ff1);
        Matrix d_mid = grad + layer_norm_backward(c.ln2, d_ln2, b.ln2, g.ln2);

        // Attention branch.
        const Matrix d_concat = affine_backward(c.attn_concat, d_mid, b.o, g.o);
        Matrix dq = Matrix::Zero(c.q.rows(), c.q.cols());
        Matrix dk_all = Matrix::Zero(c.k.rows(), c.k.cols());
        Matrix dv = Matrix::Zero(c.v.rows(), c.v.cols());
        for (std::size_t n = 0; n < nodes; ++n) {
            const auto r0 = static_cast<Eigen::Index>(n * steps);
            for (std::size_t hd = 0; hd < n_heads; ++hd) {
                const auto c0 = static_cast<Eigen::Index>(hd * dk);
                const Matrix& p = c.probs[n * n_heads + hd];
                const auto d_o = d_concat.block(r0, c0, T, DK);
                const Matrix dp = d_o * c.v.block(r0, c0, T, DK).transpose();
                dv.block(r0, c0, T, DK).noalias() = p.transpose() * d_o;
                Matrix ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
                ds *= scale;
                dq.block(r0, c0, T, DK).noalias() = ds * c.k.block(r0, c0, T, DK);
                dk_all.block(r0, c0, T, DK).noalias() = ds.transpose() * c.q.block(r0, c0, T, DK);
            }
        }
        Matrix d_ln1 = affine_backward(c.ln1_out, dq, b.q, g.q);
        d_ln1 += affine_backward(c.ln1_out, dk_all, b.k, g.k);
        d_ln1 += affine_backward(c.ln1_out, dv, b.v, g.v);
        grad = d_mid + layer_norm_backward(c.ln1, d_ln1, b.ln1, g.ln1);
    }
    Tensor3 out(nodes, steps, d);
    out.data() = std::move(grad);
    return out;
}

// ---- output head ------------------------------------------------------------------

Tensor3 output_head(const Tensor3& h, const Linear& head) {
    if (h.width() != head.weight.shape.at(0))
        throw std::invalid_argument("output head expects width " + std::to_string(head.weight.shape.at(0)) +
                                    ", input is " + h.shape_string());
    Tensor3 out(h.nodes(), h.steps(), head.weight.shape.at(1));
    out.data() = affine(h.data(), head);
    return out;
}

Tensor3 output_head_backward(const Tensor3& h, const Tensor3& grad_out, const Linear& head, Linear& grads) {
    Tensor3 out(h.nodes(), h.steps(), h.width());
    out.data() = affine_backward(h.data(), grad_out.data(), head, grads);
    return out;
}

} // namespace gatgpt
