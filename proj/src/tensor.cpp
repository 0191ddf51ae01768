#include "orseq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace orseq {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : Error(op + ": incompatible shapes " + to_string(a) + " and " + to_string(b)) {}

ShapeError::ShapeError(const std::string& op, const Shape& a, const std::string& why)
    : Error(op + ": shape " + to_string(a) + " " + why) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.empty() || std::find(shape_.begin(), shape_.end(), 0u) != shape_.end())
    throw ShapeError("tensor", shape_, "must be non-empty with positive extents");
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.empty() || std::find(shape_.begin(), shape_.end(), 0u) != shape_.end())
    throw ShapeError("tensor", shape_, "must be non-empty with positive extents");
  if (shape_size(shape_) != values_.size())
    throw ShapeError("tensor", shape_,
                     "does not hold " + std::to_string(values_.size()) + " values");
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::row(std::size_t r) const {
  if (rank() != 2 || r >= rows()) throw ShapeError("row", shape_, "has no row " + std::to_string(r));
  const auto first = values_.begin() + static_cast<std::ptrdiff_t>(r * cols());
  return Tensor::vector(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(cols())));
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace orseq
