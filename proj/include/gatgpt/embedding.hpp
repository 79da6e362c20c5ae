#pragma once

#include <cstddef>
#include <cstdint>

#include "gatgpt/parameter.hpp"
#include "gatgpt/tensor.hpp"

namespace gatgpt {

/// Conv1d token embedding: `weight` is [d_model, in_channels, kernel_width],
/// `bias` is [d_model].
struct EmbeddingParams {
    Parameter weight;
    Parameter bias;

    std::size_t d_model() const { return weight.shape.at(0); }
    std::size_t in_channels() const { return weight.shape.at(1); }
    std::size_t kernel_width() const { return weight.shape.at(2); }
};

/// Zero-filled parameters; kernel width must be odd, d_model even.
EmbeddingParams make_embedding(std::size_t d_model, std::size_t in_channels, std::size_t kernel_width);

/// Uniform fan-in init in [-1/sqrt(C_in*k), 1/sqrt(C_in*k)].
void init_embedding(EmbeddingParams& p, Rng& rng);

/// 1-d convolution along time with zero "same" padding, per node.
Tensor3 token_embed(const Tensor3& x, const EmbeddingParams& p);

/// PE[pos, 2i] = sin(pos / 10000^(2i/d_model)), PE[pos, 2i+1] = cos(...).
Matrix positional_encoding(std::size_t steps, std::size_t d_model);

Tensor3 embed(const Tensor3& x, const EmbeddingParams& p);

/// Accumulates dLoss/dweight and dLoss/dbias into `grads` given dLoss/dembed.
/// The input is data, so no input gradient is produced.
void embed_backward(const Tensor3& x, const Tensor3& grad_out, const EmbeddingParams& p, EmbeddingParams& grads);

} // namespace gatgpt
