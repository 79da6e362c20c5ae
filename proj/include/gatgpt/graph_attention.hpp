#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gatgpt/dataset.hpp"
#include "gatgpt/parameter.hpp"
#include "gatgpt/tensor.hpp"

namespace gatgpt {

/// One attention head: `weight` W is [d_in, d_head], `attention` a is [2*d_head].
struct GatHead {
    Parameter weight;
    Parameter attention;
};

struct GatParams {
    std::vector<GatHead> heads;
    double leaky_slope = 0.2;

    std::size_t d_in() const { return heads.at(0).weight.shape.at(0); }
    std::size_t d_head() const { return heads.at(0).weight.shape.at(1); }
    std::size_t d_out() const { return heads.size() * d_head(); }
};

GatParams make_gat(std::size_t d_in, std::size_t d_head, std::size_t num_heads, double leaky_slope = 0.2);

/// Glorot-uniform init of every W and a.
void init_gat(GatParams& p, Rng& rng);

/// A (.) M with M ~ Bernoulli(1 - p) drawn independently for every nonzero
/// off-diagonal entry. The diagonal is never dropped.
AdjacencyMatrix drop_edge(const AdjacencyMatrix& a, double p, std::uint64_t seed);

/// Throws std::invalid_argument if some node has no neighbour under `a`.
void require_neighbours(const AdjacencyMatrix& a);

/// Single head on one [N, d_in] slice. When `attention` is given it receives
/// the [N, N] normalized coefficients (zero outside each neighbourhood).
Matrix gat_head(const Matrix& h_in, const AdjacencyMatrix& a, const GatHead& head, double leaky_slope,
                Matrix* attention = nullptr);

/// Concatenation of all heads in declared order: [N, K*d_head].
Matrix gat_multi_head(const Matrix& h_in, const AdjacencyMatrix& a, const GatParams& p,
                      std::vector<Matrix>* attention = nullptr);

/// Forward state kept for the backward pass.
struct GatCache {
    Tensor3 input;
    AdjacencyMatrix adjacency;
    std::vector<Matrix> projected;              // per head, [N*T, d_head]
    std::vector<std::vector<Matrix>> attention; // [head][t] -> [N, N]
    std::vector<std::vector<Matrix>> mixed;     // [head][t] -> [N, d_head], pre-ELU
};

/// Multi-head attention applied independently at every time step with the
/// same parameters and adjacency.
Tensor3 gat_over_time(const Tensor3& x, const AdjacencyMatrix& a, const GatParams& p, GatCache* cache = nullptr);

/// Accumulates parameter gradients into `grads`; returns dLoss/dx.
Tensor3 gat_over_time_backward(const GatCache& cache, const Tensor3& grad_out, const GatParams& p, GatParams& grads);

} // namespace gatgpt
