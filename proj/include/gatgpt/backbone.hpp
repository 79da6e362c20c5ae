#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "gatgpt/embedding.hpp"
#include "gatgpt/graph_attention.hpp"
#include "gatgpt/parameter.hpp"
#include "gatgpt/tensor.hpp"

namespace gatgpt {

struct ModelConfig {
    std::size_t layers = 2;       // transformer blocks
    std::size_t d_model = 64;
    std::size_t n_heads = 4;      // self-attention heads per block
    std::size_t gat_heads = 4;    // K
    std::size_t d_head = 0;       // per graph-attention head; 0 = d_model / K
    std::size_t in_channels = 1;  // data channels; the model adds one mask channel
    std::size_t out_channels = 1; // C_out
    std::size_t kernel_width = 3;
    double leaky_slope = 0.2;

    std::size_t gat_head_dim() const { return d_head != 0 ? d_head : (gat_heads ? d_model / gat_heads : 0); }
    std::size_t ff_hidden() const { return 4 * d_model; }
    std::size_t model_in_channels() const { return in_channels + 1; }

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;
};

/// Affine map y = x * weight + bias; weight is [in, out].
struct Linear {
    Parameter weight;
    Parameter bias;
};

struct LayerNormParams {
    Parameter scale;
    Parameter shift;
};

struct BlockParams {
    Linear q, k, v, o;
    Linear ff1, ff2;
    LayerNormParams ln1, ln2;
};

/// Every model tensor. Attention and feed-forward tensors are frozen; the
/// embedding, graph attention, layer norms and output head are trainable.
struct ModelParams {
    ModelConfig config;
    EmbeddingParams embedding;
    GatParams gat;
    std::vector<BlockParams> blocks;
    Linear head;

    /// Visits every tensor once, in checkpoint order.
    void for_each(const std::function<void(Parameter&)>& fn);
    void for_each(const std::function<void(const Parameter&)>& fn) const;

    std::size_t trainable_count() const;
    std::size_t total_count() const;
};

/// Parameters with the model's layout, all zero.
ModelParams make_model(const ModelConfig& config);
ModelParams zeros_like(const ModelParams& p);

/// Deterministic per seed. Values are rounded to float32 so a freshly
/// initialized model survives a checkpoint round trip unchanged.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

/// Closed-form trainable parameter count for a configuration.
std::size_t expected_trainable_count(const ModelConfig& config);

// ---- layers ---------------------------------------------------------------------

struct LayerNormCache {
    Matrix normalized; // (x - mean) / sd
    Eigen::VectorXd inv_std;
};

struct BlockCache {
    Matrix input;
    LayerNormCache ln1;
    Matrix ln1_out;
    Matrix q, k, v;
    std::vector<Matrix> probs; // [node * n_heads + head] -> [T, T]
    Matrix attn_concat;
    Matrix mid; // input + attention branch
    LayerNormCache ln2;
    Matrix ln2_out;
    Matrix ff_pre; // before GELU
    Matrix ff_tanh; // tanh term of the GELU approximation
    Matrix ff_act;
};

struct BackboneCache {
    std::size_t nodes = 0;
    std::size_t steps = 0;
    std::vector<BlockCache> blocks;
};

/// Causal pre-norm transformer blocks over time, independently per node.
/// `probs`, if given, receives every attention probability matrix, indexed
/// [block][node * n_heads + head].
Tensor3 backbone_forward(const Tensor3& x, const std::vector<BlockParams>& blocks, std::size_t n_heads,
                         BackboneCache* cache = nullptr, std::vector<std::vector<Matrix>>* probs = nullptr);

/// Accumulates gradients of non-frozen block tensors; returns dLoss/dx.
Tensor3 backbone_backward(const BackboneCache& cache, const Tensor3& grad_out, const std::vector<BlockParams>& blocks,
                          std::size_t n_heads, std::vector<BlockParams>& grads);

Tensor3 output_head(const Tensor3& h, const Linear& head);
Tensor3 output_head_backward(const Tensor3& h, const Tensor3& grad_out, const Linear& head, Linear& grads);

double gelu(double x);
double gelu_derivative(double x);

} // namespace gatgpt
