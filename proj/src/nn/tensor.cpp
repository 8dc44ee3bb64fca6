#include "mexit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "mexit/error.hpp"

namespace mexit {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape_) + " holds " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Shape Tensor::sample_shape() const {
  if (shape_.empty()) throw ShapeError("scalar tensor has no batch dimension");
  return Shape(shape_.begin() + 1, shape_.end());
}

std::size_t Tensor::sample_size() const {
  if (shape_.empty()) throw ShapeError("scalar tensor has no batch dimension");
  return shape_[0] == 0 ? shape_size(sample_shape()) : data_.size() / shape_[0];
}

std::span<const double> Tensor::sample(std::size_t i) const {
  const std::size_t n = sample_size();
  return std::span<const double>(data_).subspan(i * n, n);
}

std::span<double> Tensor::sample(std::size_t i) {
  const std::size_t n = sample_size();
  return std::span<double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> rows) {
  const std::size_t n = source.sample_size();
  Tensor out(batched(rows.size(), source.sample_shape()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= source.dim(0)) {
      throw InvalidArgument("row " + std::to_string(rows[r]) + " out of range for " +
                            std::to_string(source.dim(0)) + " samples");
    }
    auto src = source.sample(rows[r]);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  return out;
}

Shape batched(std::size_t batch, const Shape& sample_shape) {
  Shape s;
  s.reserve(sample_shape.size() + 1);
  s.push_back(batch);
  s.insert(s.end(), sample_shape.begin(), sample_shape.end());
  return s;
}

}  // namespace mexit
