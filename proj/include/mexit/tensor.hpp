#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mexit {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. The first dimension is the batch
/// dimension wherever a tensor holds several samples.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Shape without the leading batch dimension.
  Shape sample_shape() const;
  std::size_t sample_size() const;
  std::span<const double> sample(std::size_t i) const;
  std::span<double> sample(std::size_t i);

  /// Same data, new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Copies the listed samples (first-dimension rows) into a new batch tensor.
Tensor gather_rows(const Tensor& source, std::span<const std::size_t> rows);

/// Prepends a batch dimension of `batch` to a sample shape.
Shape batched(std::size_t batch, const Shape& sample_shape);

}  // namespace mexit
