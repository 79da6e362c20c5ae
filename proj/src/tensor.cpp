#include "gatgpt/tensor.hpp"

#include <cmath>
#include <algorithm>

namespace gatgpt {

Tensor3::Tensor3(std::size_t nodes, std::size_t steps, std::size_t width, double fill)
    : nodes_(nodes), steps_(steps), width_(width),
      data_(Matrix::Constant(static_cast<Eigen::Index>(nodes * steps), static_cast<Eigen::Index>(width), fill)) {}

StepView Tensor3::step(std::size_t t) {
    return StepView(data_.data() + t * width_, static_cast<Eigen::Index>(nodes_),
                    static_cast<Eigen::Index>(width_),
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(steps_ * width_)));
}

ConstStepView Tensor3::step(std::size_t t) const {
    return ConstStepView(data_.data() + t * width_, static_cast<Eigen::Index>(nodes_),
                         static_cast<Eigen::Index>(width_),
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(steps_ * width_)));
}

std::string Tensor3::shape_string() const {
    return "[" + std::to_string(nodes_) + ", " + std::to_string(steps_) + ", " + std::to_string(width_) + "]";
}

std::size_t BoolGrid::count() const {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

BoolGrid BoolGrid::slice_steps(std::size_t begin, std::size_t end) const {
    BoolGrid out(nodes_, end - begin);
    for (std::size_t n = 0; n < nodes_; ++n)
        for (std::size_t t = begin; t < end; ++t)
            out.set(n, t - begin, (*this)(n, t));
    return out;
}

std::size_t Rng::uniform_int(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
}

double Rng::normal() {
    return std::normal_distribution<double>(0.0, 1.0)(engine_);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace gatgpt
