#include "gatgpt/parameter.hpp"

#include <functional>
#include <numeric>

namespace gatgpt {

Parameter::Parameter(std::string n, std::vector<std::size_t> s, bool f)
    : name(std::move(n)), shape(std::move(s)), frozen(f) {
    const std::size_t total = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    const std::size_t rows = shape.size() <= 1 ? 1 : shape[0];
    value = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rows == 0 ? 0 : total / rows));
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
        out += (i ? ", " : "") + std::to_string(shape[i]);
    return out + "]";
}

} // namespace gatgpt
