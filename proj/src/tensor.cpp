#include "fhgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fhgan/error.hpp"

namespace fhgan {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (static_cast<std::int64_t>(data_.size()) != numel(shape_)) {
    throw ShapeError("tensor of shape " + to_string(shape_) + " given " + std::to_string(data_.size()) +
                     " values");
  }
}

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for shape " + to_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

double& Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

double Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor sample(const Tensor& batch, std::int64_t n) {
  if (batch.rank() < 1 || n < 0 || n >= batch.dim(0)) {
    throw ShapeError("sample index out of range for batch " + to_string(batch.shape()));
  }
  Shape shape(batch.shape().begin() + 1, batch.shape().end());
  const auto stride = numel(shape);
  std::vector<double> values(batch.data() + n * stride, batch.data() + (n + 1) * stride);
  return Tensor(std::move(shape), std::move(values));
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  Shape shape = items[0].shape();
  shape.insert(shape.begin(), static_cast<std::int64_t>(items.size()));
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(numel(shape)));
  for (const auto& t : items) {
    if (t.shape() != items[0].shape()) {
      throw ShapeError("stack: mismatched shapes " + to_string(t.shape()) + " vs " + to_string(items[0].shape()));
    }
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  return Tensor(std::move(shape), std::move(values));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fhgan
