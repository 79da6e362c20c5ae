#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "gatgpt/dataset.hpp"
#include "gatgpt/evaluation.hpp"

namespace gatgpt::testing {

struct FixtureOptions {
    std::size_t nodes = 8;
    std::size_t steps = 2000;
    double noise = 0.05;
    double mask_ratio = 0.25;
    std::uint64_t seed = 1;
};

/// Hourly ring-graph series: a daily sinusoid with a per-node phase, a slow
/// component shared across nodes with per-node loading, and Gaussian noise.
inline TimeSeriesTensor ring_series(const FixtureOptions& o = {}) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    Rng rng(o.seed);
    const double periods[] = {67.0, 151.0, 313.0};
    double offsets[3];
    for (double& off : offsets)
        off = rng.uniform(0.0, two_pi);

    TimeSeriesTensor t;
    t.values = Tensor3(o.nodes, o.steps, 1);
    t.observed = BoolGrid(o.nodes, o.steps, true);
    t.step_seconds = 3600;
    t.start_time = 1704067200; // 2024-01-01T00:00:00Z
    for (std::size_t n = 0; n < o.nodes; ++n)
        t.node_ids.push_back("n" + std::to_string(n));
    for (std::size_t n = 0; n < o.nodes; ++n) {
        const double phase = two_pi * static_cast<double>(n) / static_cast<double>(o.nodes);
        const double loading = 0.6 + 0.4 * std::cos(phase);
        for (std::size_t s = 0; s < o.steps; ++s) {
            const double x = static_cast<double>(s);
            double shared = 0.0;
            for (int k = 0; k < 3; ++k)
                shared += std::sin(two_pi * x / periods[k] + offsets[k]);
            shared /= 1.5;
            t.values(n, s, 0) = std::sin(two_pi * x / 24.0 + phase) + loading * shared + o.noise * rng.normal();
        }
    }
    return t;
}

/// Each node linked to itself and its two ring neighbours.
inline AdjacencyMatrix ring_adjacency(std::size_t nodes) {
    AdjacencyMatrix a;
    a.weights = Matrix::Zero(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(nodes));
    for (std::size_t i = 0; i < nodes; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        a.weights(ii, ii) = 1.0;
        a.weights(ii, static_cast<Eigen::Index>((i + 1) % nodes)) = 1.0;
        a.weights(ii, static_cast<Eigen::Index>((i + nodes - 1) % nodes)) = 1.0;
    }
    return a;
}

inline ExperimentInputs ring_experiment(const FixtureOptions& o = {}) {
    ExperimentInputs in;
    in.data = ring_series(o);
    in.eval_mask = gen_point_mask(in.data, o.mask_ratio, derive_seed(o.seed, 99)).hidden;
    in.adjacency = ring_adjacency(o.nodes);
    in.dataset_tag = "ring";
    return in;
}

/// Population standard deviation of every observed value.
inline double data_std(const TimeSeriesTensor& t) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < t.nodes(); ++n)
        for (std::size_t s = 0; s < t.steps(); ++s)
            if (t.observed(n, s)) {
                sum += t.values(n, s, 0);
                sq += t.values(n, s, 0) * t.values(n, s, 0);
                ++count;
            }
    const double mean = sum / static_cast<double>(count);
    return std::sqrt(sq / static_cast<double>(count) - mean * mean);
}

} // namespace gatgpt::testing
