#pragma once

#include <cstdint>

#include "gatgpt/backbone.hpp"
#include "gatgpt/dataset.hpp"
#include "gatgpt/graph_attention.hpp"

namespace gatgpt {

enum class Mode { Train, Eval };

struct ForwardOptions {
    Mode mode = Mode::Eval;
    std::uint64_t seed = 0;  // DropEdge stream, Train mode only
    double dropedge_p = 0.0; // Train mode only
};

/// Model input [N, T, C+1]: observed values (0 where unobserved) followed by
/// the observed mask as an extra channel.
Tensor3 build_model_input(const TimeSeriesTensor& t);

struct ModelCache {
    Tensor3 input;
    Tensor3 embedded;
    GatCache gat;
    Tensor3 spatial;
    BackboneCache backbone;
    Tensor3 hidden;
};

/// embed -> graph attention over time -> backbone -> output head. `t` is in
/// normalized units; the output [N, T, C_out] is too.
Tensor3 model_forward(const TimeSeriesTensor& t, const AdjacencyMatrix& a, const ModelParams& p,
                      const ForwardOptions& options = {}, ModelCache* cache = nullptr);

/// Same pipeline on a prepared input and an adjacency that is used as is.
Tensor3 model_forward_input(const Tensor3& input, const AdjacencyMatrix& a, const ModelParams& p,
                            ModelCache* cache = nullptr);

/// Accumulates dLoss/dparam for every non-frozen tensor into `grads`.
void model_backward(const ModelCache& cache, const Tensor3& grad_out, const ModelParams& p, ModelParams& grads);

} // namespace gatgpt
