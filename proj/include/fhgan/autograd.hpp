#pragma once

// Reverse-mode automatic differentiation over fhgan::Tensor.
//
// Every backward rule is itself written with differentiable ops, so gradients
// can be differentiated again (create_graph = true). The gradient penalty of
// the critic relies on this.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fhgan/tensor.hpp"

namespace fhgan::ag {

class Var;
using BackwardFn = std::function<std::vector<Var>(const Var& grad, std::span<const Var> inputs)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

// Shared handle to a graph node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(int axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Node* node() const { return node_.get(); }
  const char* op() const { return node_->op; }

  // Internal: result of an op. Records the graph only when gradients are enabled
  // and at least one input requires them.
  static Var from_op(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op);

 private:
  std::shared_ptr<Node> node_;
};

// Process-wide (per-thread) switch for graph recording.
bool grad_enabled();

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

// Gradients of `output` with respect to each of `wrt`. `seed` defaults to ones
// (output must then have one element). Inputs unreachable from the output get
// zero gradients. With create_graph the returned gradients are themselves
// differentiable.
std::vector<Var> grad(const Var& output, std::span<const Var> wrt, const Var& seed = {},
                      bool create_graph = false);

Var constant(Tensor value);

// Elementwise arithmetic on equally shaped operands.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);
Var square(const Var& a);
// Multiplication by a constant (non-differentiable) tensor of the same shape.
Var mul_const(const Var& a, const Tensor& c);
// Multiplication by a one-element variable.
Var mul_scalar(const Var& a, const Var& s);
Var reciprocal(const Var& a);
Var sqrt(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var clamp(const Var& a, double lo, double hi);

// Reductions and their broadcasting adjoints.
Var sum(const Var& a);                                   // -> shape {}
Var mean(const Var& a);                                  // -> shape {}
Var expand(const Var& s, const Shape& shape);            // one element -> shape
Var sum_per_sample(const Var& x);                        // [N,...] -> [N]
Var expand_per_sample(const Var& v, const Shape& shape); // [N] -> [N,...]
Var channel_sum(const Var& x);                           // [N,C,...] -> [C]
Var expand_channel(const Var& v, const Shape& shape);    // [C] -> [N,C,...]
Var spatial_sum(const Var& x);                           // [N,C,H,W] -> [N,C]
Var expand_spatial(const Var& v, std::int64_t height, std::int64_t width);
Var add_channel_bias(const Var& x, const Var& bias);     // x[N,C,...] + bias[C]

Var reshape(const Var& a, const Shape& shape);
Var matmul(const Var& a, const Var& b);  // [M,K] x [K,N]
Var transpose(const Var& a);             // [M,N] -> [N,M]

// Axis-0/1 structural ops.
Var concat(std::span<const Var> parts, int axis);
Var slice(const Var& x, int axis, std::int64_t start, std::int64_t count);
// Inverse of slice: places x at [start, start+count) of a zero tensor with `total` entries along axis.
Var pad(const Var& x, int axis, std::int64_t start, std::int64_t total);

// 2-D convolution (cross-correlation) without bias. x[N,C,H,W], w[O,C,KH,KW].
Var conv2d(const Var& x, const Var& w, int stride, int padding);
// Adjoint of conv2d in its input (transposed convolution) for an input of size height x width.
Var conv2d_input_grad(const Var& g, const Var& w, int stride, int padding, std::int64_t height,
                      std::int64_t width);
// Adjoint of conv2d in its weights.
Var conv2d_weight_grad(const Var& x, const Var& g, int stride, int padding, std::int64_t kernel_h,
                       std::int64_t kernel_w);

Var leaky_relu(const Var& x, double slope);
// Parametric ReLU with one learnable slope (shape {1}) shared across the tensor.
Var prelu(const Var& x, const Var& slope);

// [N, C*r*r, H, W] -> [N, C, H*r, W*r]; output channel c at (r*i+a, r*j+b) reads input channel c*r*r + a*r + b.
Var pixel_shuffle(const Var& x, int r);
Var pixel_unshuffle(const Var& x, int r);

// Convenience for gradient-free evaluation of a scalar.
inline double value_of(const Var& v) { return v.value().item(); }

}  // namespace fhgan::ag
