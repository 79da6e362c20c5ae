#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gatgpt {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using StepView = Eigen::Map<Matrix, 0, Eigen::OuterStride<>>;
using ConstStepView = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;

/// Dense [nodes, steps, width] tensor stored as a (nodes*steps) x width
/// row-major matrix; row n*steps + t holds the feature vector of node n at t.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t nodes, std::size_t steps, std::size_t width, double fill = 0.0);

    std::size_t nodes() const { return nodes_; }
    std::size_t steps() const { return steps_; }
    std::size_t width() const { return width_; }

    double& operator()(std::size_t n, std::size_t t, std::size_t c) {
        return data_(static_cast<Eigen::Index>(n * steps_ + t), static_cast<Eigen::Index>(c));
    }
    double operator()(std::size_t n, std::size_t t, std::size_t c) const {
        return data_(static_cast<Eigen::Index>(n * steps_ + t), static_cast<Eigen::Index>(c));
    }

    Matrix& data() { return data_; }
    const Matrix& data() const { return data_; }

    // [steps, width] rows of one node.
    auto node(std::size_t n) {
        return data_.middleRows(static_cast<Eigen::Index>(n * steps_), static_cast<Eigen::Index>(steps_));
    }
    auto node(std::size_t n) const {
        return data_.middleRows(static_cast<Eigen::Index>(n * steps_), static_cast<Eigen::Index>(steps_));
    }

    // [nodes, width] strided view of one time step.
    StepView step(std::size_t t);
    ConstStepView step(std::size_t t) const;

    bool same_shape(const Tensor3& other) const {
        return nodes_ == other.nodes_ && steps_ == other.steps_ && width_ == other.width_;
    }
    std::string shape_string() const;

private:
    std::size_t nodes_ = 0;
    std::size_t steps_ = 0;
    std::size_t width_ = 0;
    Matrix data_;
};

/// Boolean [nodes, steps] grid used for observed / hidden / loss masks.
class BoolGrid {
public:
    BoolGrid() = default;
    BoolGrid(std::size_t nodes, std::size_t steps, bool fill = false)
        : nodes_(nodes), steps_(steps), cells_(nodes * steps, fill ? 1 : 0) {}

    std::size_t nodes() const { return nodes_; }
    std::size_t steps() const { return steps_; }

    bool operator()(std::size_t n, std::size_t t) const { return cells_[n * steps_ + t] != 0; }
    void set(std::size_t n, std::size_t t, bool v) { cells_[n * steps_ + t] = v ? 1 : 0; }

    std::size_t count() const;
    bool same_shape(const BoolGrid& other) const {
        return nodes_ == other.nodes_ && steps_ == other.steps_;
    }
    bool operator==(const BoolGrid& other) const = default;

    BoolGrid slice_steps(std::size_t begin, std::size_t end) const;

private:
    std::size_t nodes_ = 0;
    std::size_t steps_ = 0;
    std::vector<std::uint8_t> cells_;
};

/// Seeded random stream; Bernoulli draws use the top 53 bits of mt19937_64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    bool bernoulli(double p) { return uniform() < p; }
    // Inclusive range [lo, hi].
    std::size_t uniform_int(std::size_t lo, std::size_t hi);
    double normal();

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

} // namespace gatgpt
