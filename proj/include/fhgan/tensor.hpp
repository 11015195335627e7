#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fhgan {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major array of doubles. Image batches use NCHW layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor(Shape{}, value); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Scalar value of a one-element tensor.
  double item() const;

  // Element access for rank-4 NCHW tensors.
  double& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);
  double at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;

  Tensor reshaped(Shape shape) const;
  void fill(double value);

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Sample n of a batch tensor, with the leading dimension dropped.
Tensor sample(const Tensor& batch, std::int64_t n);
// Stacks equally shaped tensors along a new leading dimension.
Tensor stack(std::span<const Tensor> items);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace fhgan
