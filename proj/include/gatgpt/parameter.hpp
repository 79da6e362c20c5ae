#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gatgpt/tensor.hpp"

namespace gatgpt {

/// A named model tensor. `value` is the row-major flattening of `shape` into
/// (shape[0]) x (product of the remaining dims); 1-d tensors are 1 x shape[0].
struct Parameter {
    std::string name;
    std::vector<std::size_t> shape;
    Matrix value;
    bool frozen = false;

    Parameter() = default;
    Parameter(std::string name, std::vector<std::size_t> shape, bool frozen);

    std::size_t numel() const { return static_cast<std::size_t>(value.size()); }
    double* data() { return value.data(); }
    const double* data() const { return value.data(); }
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

} // namespace gatgpt
