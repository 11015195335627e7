#include "fhgan/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "fhgan/error.hpp"

namespace fhgan::ag {

namespace {

thread_local bool g_grad_enabled = true;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void require_rank(const Var& a, int rank, const char* op) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(a.shape()));
  }
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

// (outer, axis, inner) decomposition of a shape around `axis`.
struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t extent = 1;
  std::int64_t inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  if (axis < 0 || axis >= static_cast<int>(shape.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape));
  }
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.extent = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

struct ConvGeometry {
  std::int64_t batch, in_c, in_h, in_w;
  std::int64_t out_c, kh, kw;
  std::int64_t out_h, out_w;
  int stride, padding;

  std::int64_t col_rows() const { return in_c * kh * kw; }
  std::int64_t col_cols() const { return out_h * out_w; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
};

ConvGeometry make_geometry(std::int64_t batch, std::int64_t in_c, std::int64_t in_h, std::int64_t in_w,
                           std::int64_t out_c, std::int64_t kh, std::int64_t kw, int stride, int padding) {
  if (stride < 1 || padding < 0) throw ConfigError("conv2d: invalid stride/padding");
  ConvGeometry g{batch, in_c, in_h, in_w, out_c, kh, kw, 0, 0, stride, padding};
  const auto span_h = in_h + 2 * padding - kh;
  const auto span_w = in_w + 2 * padding - kw;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) + " larger than padded input " +
                     std::to_string(in_h) + "x" + std::to_string(in_w));
  }
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;
  return g;
}

// Unfolds one sample [C,H,W] into columns [C*KH*KW, OH*OW].
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  for (std::int64_t c = 0; c < g.in_c; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t ih = oh * g.stride + ki - g.padding;
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.in_h) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = x + (c * g.in_h + ih) * g.in_w;
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            const std::int64_t iw = ow * g.stride + kj - g.padding;
            dst[ow] = (iw >= 0 && iw < g.in_w) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-adds columns back into one sample [C,H,W] (which must be zeroed).
void col2im(const double* cols, const ConvGeometry& g, double* x) {
  for (std::int64_t c = 0; c < g.in_c; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t ih = oh * g.stride + ki - g.padding;
          if (ih < 0 || ih >= g.in_h) continue;
          double* dst = x + (c * g.in_h + ih) * g.in_w;
          const double* src = row + oh * g.out_w;
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            const std::int64_t iw = ow * g.stride + kj - g.padding;
            if (iw >= 0 && iw < g.in_w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

Tensor conv_forward(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
  Tensor y({g.batch, g.out_c, g.out_h, g.out_w});
  const ConstMatMap wm(w.data(), g.out_c, g.col_rows());
  std::vector<double> cols(g.is_pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
  for (std::int64_t n = 0; n < g.batch; ++n) {
    const double* xn = x.data() + n * g.in_c * g.in_h * g.in_w;
    const double* col_ptr = xn;
    if (!g.is_pointwise()) {
      im2col(xn, g, cols.data());
      col_ptr = cols.data();
    }
    MatMap yn(y.data() + n * g.out_c * g.col_cols(), g.out_c, g.col_cols());
    yn.noalias() = wm * ConstMatMap(col_ptr, g.col_rows(), g.col_cols());
  }
  return y;
}

Tensor conv_input_grad(const Tensor& gy, const Tensor& w, const ConvGeometry& g) {
  Tensor dx({g.batch, g.in_c, g.in_h, g.in_w});
  const ConstMatMap wm(w.data(), g.out_c, g.col_rows());
  std::vector<double> cols(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
  for (std::int64_t n = 0; n < g.batch; ++n) {
    const ConstMatMap gn(gy.data() + n * g.out_c * g.col_cols(), g.out_c, g.col_cols());
    double* dxn = dx.data() + n * g.in_c * g.in_h * g.in_w;
    if (g.is_pointwise()) {
      MatMap(dxn, g.col_rows(), g.col_cols()).noalias() = wm.transpose() * gn;
    } else {
      MatMap(cols.data(), g.col_rows(), g.col_cols()).noalias() = wm.transpose() * gn;
      col2im(cols.data(), g, dxn);
    }
  }
  return dx;
}

Tensor conv_weight_grad(const Tensor& x, const Tensor& gy, const ConvGeometry& g) {
  Tensor dw({g.out_c, g.in_c, g.kh, g.kw});
  MatMap dwm(dw.data(), g.out_c, g.col_rows());
  std::vector<double> cols(g.is_pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
  for (std::int64_t n = 0; n < g.batch; ++n) {
    const double* xn = x.data() + n * g.in_c * g.in_h * g.in_w;
    const double* col_ptr = xn;
    if (!g.is_pointwise()) {
      im2col(xn, g, cols.data());
      col_ptr = cols.data();
    }
    const ConstMatMap gn(gy.data() + n * g.out_c * g.col_cols(), g.out_c, g.col_cols());
    dwm.noalias() += gn * ConstMatMap(col_ptr, g.col_rows(), g.col_cols()).transpose();
  }
  return dw;
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_op(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(value);
  out.node_->op = op;
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs = std::move(inputs);
  out.node_->backward = std::move(backward);
  return out;
}

bool grad_enabled() { return g_grad_enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) { g_grad_enabled = enabled; }
GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

std::vector<Var> grad(const Var& output, std::span<const Var> wrt, const Var& seed, bool create_graph) {
  if (!output.defined()) throw ConfigError("grad: undefined output");
  Var seed_var = seed;
  if (!seed_var.defined()) {
    if (output.value().size() != 1) throw ShapeError("grad: implicit seed needs a one-element output");
    seed_var = constant(Tensor(output.shape(), 1.0));
  } else if (seed_var.shape() != output.shape()) {
    throw ShapeError("grad: seed shape does not match output");
  }

  // Reverse topological order via iterative post-order DFS over grad-requiring nodes.
  std::vector<const Node*> order;
  std::unordered_set<const Node*> visited;
  if (output.requires_grad()) {
    std::vector<std::pair<const Node*, std::size_t>> stack{{output.node(), 0}};
    visited.insert(output.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        const Node* child = node->inputs[next++].node();
        if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::unordered_set<const Node*> targets;
  for (const auto& v : wrt) targets.insert(v.node());

  GradModeGuard mode(create_graph);
  std::unordered_map<const Node*, Var> grads;
  if (output.requires_grad()) grads[output.node()] = seed_var;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    Var g = found->second;
    if (!targets.contains(node)) grads.erase(found);
    if (!node->backward) continue;
    auto input_grads = node->backward(g, node->inputs);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const Var& in = node->inputs[i];
      if (!in.requires_grad() || !input_grads[i].defined()) continue;
      auto [slot, inserted] = grads.try_emplace(in.node(), input_grads[i]);
      if (!inserted) slot->second = add(slot->second, input_grads[i]);
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const auto& v : wrt) {
    auto found = grads.find(v.node());
    if (found != grads.end()) {
      result.push_back(found->second);
    } else {
      result.push_back(constant(Tensor(v.shape())));
    }
  }
  return result;
}

Var constant(Tensor value) { return Var(std::move(value), false); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return Var::from_op(map_binary(a.value(), b.value(), [](double x, double y) { return x + y; }), {a, b},
                      [](const Var& g, std::span<const Var>) { return std::vector<Var>{g, g}; }, "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return Var::from_op(map_binary(a.value(), b.value(), [](double x, double y) { return x - y; }), {a, b},
                      [](const Var& g, std::span<const Var>) { return std::vector<Var>{g, neg(g)}; }, "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return Var::from_op(map_binary(a.value(), b.value(), [](double x, double y) { return x * y; }), {a, b},
                      [](const Var& g, std::span<const Var> in) {
                        return std::vector<Var>{mul(g, in[1]), mul(g, in[0])};
                      },
                      "mul");
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double factor) {
  return Var::from_op(map_unary(a.value(), [factor](double x) { return x * factor; }), {a},
                      [factor](const Var& g, std::span<const Var>) { return std::vector<Var>{scale(g, factor)}; },
                      "scale");
}

Var add_scalar(const Var& a, double value) {
  return Var::from_op(map_unary(a.value(), [value](double x) { return x + value; }), {a},
                      [](const Var& g, std::span<const Var>) { return std::vector<Var>{g}; }, "add_scalar");
}

Var square(const Var& a) { return mul(a, a); }

Var mul_const(const Var& a, const Tensor& c) {
  if (a.shape() != c.shape()) throw ShapeError("mul_const: shape mismatch");
  return Var::from_op(map_binary(a.value(), c, [](double x, double y) { return x * y; }), {a},
                      [c](const Var& g, std::span<const Var>) { return std::vector<Var>{mul_const(g, c)}; },
                      "mul_const");
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.value().size() != 1) throw ShapeError("mul_scalar: scalar operand has shape " + to_string(s.shape()));
  const double k = s.value()[0];
  return Var::from_op(map_unary(a.value(), [k](double x) { return x * k; }), {a, s},
                      [](const Var& g, std::span<const Var> in) {
                        return std::vector<Var>{mul_scalar(g, in[1]), reshape(sum(mul(g, in[0])), in[1].shape())};
                      },
                      "mul_scalar");
}

Var reciprocal(const Var& a) {
  return Var::from_op(map_unary(a.value(), [](double x) { return 1.0 / x; }), {a},
                      [](const Var& g, std::span<const Var> in) {
                        return std::vector<Var>{neg(mul(g, square(reciprocal(in[0]))))};
                      },
                      "reciprocal");
}

Var sqrt(const Var& a) {
  return Var::from_op(map_unary(a.value(), [](double x) { return std::sqrt(x); }), {a},
                      [](const Var& g, std::span<const Var> in) {
                        return std::vector<Var>{scale(mul(g, reciprocal(sqrt(in[0]))), 0.5)};
                      },
                      "sqrt");
}

Var exp(const Var& a) {
  return Var::from_op(map_unary(a.value(), [](double x) { return std::exp(x); }), {a},
                      [](const Var& g, std::span<const Var> in) { return std::vector<Var>{mul(g, exp(in[0]))}; },
                      "exp");
}

Var log(const Var& a) {
  return Var::from_op(map_unary(a.value(), [](double x) { return std::log(x); }), {a},
                      [](const Var& g, std::span<const Var> in) {
                        return std::vector<Var>{mul(g, reciprocal(in[0]))};
                      },
                      "log");
}

Var clamp(const Var& a, double lo, double hi) {
  Tensor mask = map_unary(a.value(), [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
  return Var::from_op(map_unary(a.value(), [lo, hi](double x) { return std::clamp(x, lo, hi); }), {a},
                      [mask](const Var& g, std::span<const Var>) { return std::vector<Var>{mul_const(g, mask)}; },
                      "clamp");
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const Shape shape = a.shape();
  return Var::from_op(Tensor::scalar(total), {a},
                      [shape](const Var& g, std::span<const Var>) { return std::vector<Var>{expand(g, shape)}; },
                      "sum");
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var expand(const Var& s, const Shape& shape) {
  if (s.value().size() != 1) throw ShapeError("expand: operand must have one element");
  const Shape source = s.shape();
  return Var::from_op(Tensor(shape, s.value()[0]), {s},
                      [source](const Var& g, std::span<const Var>) {
                        return std::vector<Var>{reshape(sum(g), source)};
                      },
                      "expand");
}

Var sum_per_sample(const Var& x) {
  if (x.value().rank() < 1) throw ShapeError("sum_per_sample: rank-0 input");
  const auto n = x.dim(0);
  const auto inner = n == 0 ? 0 : x.value().size() / n;
  Tensor out({n});
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < inner; ++j) s += x.value()[i * inner + j];
    out[i] = s;
  }
  const Shape shape = x.shape();
  return Var::from_op(std::move(out), {x},
                      [shape](const Var& g, std::span<const Var>) {
                        return std::vector<Var>{expand_per_sample(g, shape)};
                      },
                      "sum_per_sample");
}

Var expand_per_sample(const Var& v, const Shape& shape) {
  require_rank(v, 1, "expand_per_sample");
  if (shape.empty() || shape[0] != v.dim(0)) throw ShapeError("expand_per_sample: leading dimension mismatch");
  Tensor out(shape);
  const auto n = shape[0];
  const auto inner = n == 0 ? 0 : out.size() / n;
  for (std::int64_t i = 0; i < n; ++i) std::fill_n(out.data() + i * inner, inner, v.value()[i]);
  return Var::from_op(std::move(out), {v},
                      [](const Var& g, std::span<const Var>) { return std::vector<Var>{sum_per_sample(g)}; },
                      "expand_per_sample");
}

Var channel_sum(const Var& x) {
  const auto s = split_at(x.shape(), 1);
  Tensor out({s.extent});
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t c = 0; c < s.extent; ++c) {
      const double* p = x.value().data() + (o * s.extent + c) * s.inner;
      double acc = 0.0;
      for (std::int64_t i = 0; i < s.inner; ++i) acc += p[i];
      out[c] += acc;
    }
  }
  const Shape shape = x.shape();
  return Var::from_op(std::move(out), {x},
                      [shape](const Var& g, std::span<const Var>) {
                        return std::vector<Var>{expand_channel(g, shape)};
                      },
                      "channel_sum");
}

Var expand_channel(const Var& v, const Shape& shape) {
  require_rank(v, 1, "expand_channel");
  const auto s = split_at(shape, 1);
  if (s.extent != v.dim(0)) throw ShapeError("expand_channel: channel mismatch");
  Tensor out(shape);
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t c = 0; c < s.extent; ++c) {
      std::fill_n(out.data() + (o * s.extent + c) * s.inner, s.inner, v.value()[c]);
    }
  }
  return Var::from_op(std::move(out), {v},
                      [](const Var& g, std::span<const Var>) { return std::vector<Var>{channel_sum(g)}; },
                      "expand_channel");
}

Var spatial_sum(const Var& x) {
  require_rank(x, 4, "spatial_sum");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c});
  for (std::int64_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < h * w; ++j) acc += x.value()[i * h * w + j];
    out[i] = acc;
  }
  return Var::from_op(std::move(out), {x},
                      [h, w](const Var& g, std::span<const Var>) {
                        return std::vector<Var>{expand_spatial(g, h, w)};
                      },
                      "spatial_sum");
}

Var expand_spatial(const Var& v, std::int64_t height, std::int64_t width) {
  require_rank(v, 2, "expand_spatial");
  Tensor out({v.dim(0), v.dim(1), height, width});
  for (std::int64_t i = 0; i < v.value().size(); ++i) {
    std::fill_n(out.data() + i * height * width, height * width, v.value()[i]);
  }
  return Var::from_op(std::move(out), {v},
                      [](const Var& g, std::span<const Var>) { return std::vector<Var>{spatial_sum(g)}; },
                      "expand_spatial");
}

Var add_channel_bias(const Var& x, const Var& bias) {
  require_rank(bias, 1, "add_channel_bias");
  const auto s = split_at(x.shape(), 1);
  if (s.extent != bias.dim(0)) throw ShapeError("add_channel_bias: channel mismatch");
  Tensor out = x.value();
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t c = 0; c < s.extent; ++c) {
      double* p = out.data() + (o * s.extent + c) * s.inner;
      const double b = bias.value()[c];
      for (std::int64_t i = 0; i < s.inner; ++i) p[i] += b;
    }
  }
  return Var::from_op(std::move(out), {x, bias},
                      [](const Var& g, std::span<const Var>) { return std::vector<Var>{g, channel_sum(g)}; },
                      "add_channel_bias");
}

Var reshape(const Var& a, const Shape& shape) {
  const Shape source = a.shape();
  return Var::from_op(a.value().reshaped(shape), {a},
                      [source](const Var& g, std::span<const Var>) {
                        return std::vector<Var>{reshape(g, source)};
                      },
                      "reshape");
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) throw ShapeError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Tensor out({a.dim(0), b.dim(1)});
  MatMap(out.data(), a.dim(0), b.dim(1)).noalias() =
      ConstMatMap(a.value().data(), a.dim(0), a.dim(1)) * ConstMatMap(b.value().data(), b.dim(0), b.dim(1));
  return Var::from_op(std::move(out), {a, b},
                      [](const Var& g, std::span<const Var> in) {
                        return std::vector<Var>{matmul(g, transpose(in[1])), matmul(transpose(in[0]), g)};
                      },
                      "matmul");
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  Tensor out({a.dim(1), a.dim(0)});
  MatMap(out.data(), a.dim(1), a.dim(0)) = ConstMatMap(a.value().data(), a.dim(0), a.dim(1)).transpose();
  return Var::from_op(std::move(out), {a},
                      [](const Var& g, std::span<const Var>) { return std::vector<Var>{transpose(g)}; },
                      "transpose");
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape shape = parts[0].shape();
  const auto base = split_at(shape, axis);
  std::int64_t total = 0;
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) {
    const auto s = split_at(p.shape(), axis);
    Shape a = p.shape(), b = shape;
    a[static_cast<std::size_t>(axis)] = 0;
    b[static_cast<std::size_t>(axis)] = 0;
    if (a != b) throw ShapeError("concat: incompatible shapes " + to_string(p.shape()) + " and " + to_string(shape));
    extents.push_back(s.extent);
    total += s.extent;
  }
  shape[static_cast<std::size_t>(axis)] = total;
  Tensor out(shape);
  std::int64_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto e = extents[k];
    for (std::int64_t o = 0; o < base.outer; ++o) {
      std::copy_n(parts[k].value().data() + o * e * base.inner, e * base.inner,
                  out.data() + (o * total + offset) * base.inner);
    }
    offset += e;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return Var::from_op(std::move(out), std::move(inputs),
                      [axis, extents](const Var& g, std::span<const Var>) {
                        std::vector<Var> grads;
                        std::int64_t start = 0;
                        for (auto e : extents) {
                          grads.push_back(slice(g, axis, start, e));
                          start += e;
                        }
                        return grads;
                      },
                      "concat");
}

Var slice(const Var& x, int axis, std::int64_t start, std::int64_t count) {
  const auto s = split_at(x.shape(), axis);
  if (start < 0 || count < 0 || start + count > s.extent) throw ShapeError("slice out of range");
  Shape shape = x.shape();
  shape[static_cast<std::size_t>(axis)] = count;
  Tensor out(shape);
  for (std::int64_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.value().data() + (o * s.extent + start) * s.inner, count * s.inner,
                out.data() + o * count * s.inner);
  }
  const auto total = s.extent;
  return Var::from_op(std::move(out), {x},
                      [axis, start, total](const Var& g, std::span<const Var>) {
                        return std::vector<Var>{pad(g, axis, start, total)};
                      },
                      "slice");
}

Var pad(const Var& x, int axis, std::int64_t start, std::int64_t total) {
  const auto s = split_at(x.shape(), axis);
  if (start < 0 || start + s.extent > total) throw ShapeError("pad out of range");
  Shape shape = x.shape();
  shape[static_cast<std::size_t>(axis)] = total;
  Tensor out(shape);
  for (std::int64_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.value().data() + o * s.extent * s.inner, s.extent * s.inner,
                out.data() + (o * total + start) * s.inner);
  }
  const auto count = s.extent;
  return Var::from_op(std::move(out), {x},
                      [axis, start, count](const Var& g, std::span<const Var>) {
                        return std::vector<Var>{slice(g, axis, start, count)};
                      },
                      "pad");
}

Var conv2d(const Var& x, const Var& w, int stride, int padding) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, kernel expects " +
                     std::to_string(w.dim(1)));
  }
  const auto g = make_geometry(x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), stride, padding);
  const auto h = x.dim(2), wd = x.dim(3), kh = w.dim(2), kw = w.dim(3);
  return Var::from_op(conv_forward(x.value(), w.value(), g), {x, w},
                      [=](const Var& gy, std::span<const Var> in) {
                        return std::vector<Var>{conv2d_input_grad(gy, in[1], stride, padding, h, wd),
                                                conv2d_weight_grad(in[0], gy, stride, padding, kh, kw)};
                      },
                      "conv2d");
}

Var conv2d_input_grad(const Var& gy, const Var& w, int stride, int padding, std::int64_t height,
                      std::int64_t width) {
  require_rank(gy, 4, "conv2d_input_grad");
  require_rank(w, 4, "conv2d_input_grad");
  const auto g = make_geometry(gy.dim(0), w.dim(1), height, width, w.dim(0), w.dim(2), w.dim(3), stride, padding);
  if (gy.dim(1) != g.out_c || gy.dim(2) != g.out_h || gy.dim(3) != g.out_w) {
    throw ShapeError("conv2d_input_grad: gradient shape " + to_string(gy.shape()) + " inconsistent with geometry");
  }
  const auto kh = w.dim(2), kw = w.dim(3);
  return Var::from_op(conv_input_grad(gy.value(), w.value(), g), {gy, w},
                      [=](const Var& gz, std::span<const Var> in) {
                        return std::vector<Var>{conv2d(gz, in[1], stride, padding),
                                                conv2d_weight_grad(gz, in[0], stride, padding, kh, kw)};
                      },
                      "conv2d_input_grad");
}

Var conv2d_weight_grad(const Var& x, const Var& gy, int stride, int padding, std::int64_t kernel_h,
                       std::int64_t kernel_w) {
  require_rank(x, 4, "conv2d_weight_grad");
  require_rank(gy, 4, "conv2d_weight_grad");
  const auto g =
      make_geometry(x.dim(0), x.dim(1), x.dim(2), x.dim(3), gy.dim(1), kernel_h, kernel_w, stride, padding);
  if (gy.dim(0) != g.batch || gy.dim(2) != g.out_h || gy.dim(3) != g.out_w) {
    throw ShapeError("conv2d_weight_grad: gradient shape " + to_string(gy.shape()) + " inconsistent with geometry");
  }
  const auto h = x.dim(2), wd = x.dim(3);
  return Var::from_op(conv_weight_grad(x.value(), gy.value(), g), {x, gy},
                      [=](const Var& gv, std::span<const Var> in) {
                        return std::vector<Var>{conv2d_input_grad(in[1], gv, stride, padding, h, wd),
                                                conv2d(in[0], gv, stride, padding)};
                      },
                      "conv2d_weight_grad");
}

Var leaky_relu(const Var& x, double slope) {
  Tensor mask = map_unary(x.value(), [slope](double v) { return v > 0.0 ? 1.0 : slope; });
  Tensor out = map_binary(x.value(), mask, [](double v, double m) { return v * m; });
  return Var::from_op(std::move(out), {x},
                      [mask](const Var& g, std::span<const Var>) { return std::vector<Var>{mul_const(g, mask)}; },
                      "leaky_relu");
}

Var prelu(const Var& x, const Var& slope) {
  if (slope.value().size() != 1) throw ShapeError("prelu: slope must have one element");
  const double a = slope.value()[0];
  Tensor out = map_unary(x.value(), [a](double v) { return v > 0.0 ? v : a * v; });
  return Var::from_op(std::move(out), {x, slope},
                      [](const Var& g, std::span<const Var> in) {
                        Tensor pos = map_unary(in[0].value(), [](double v) { return v > 0.0 ? 1.0 : 0.0; });
                        Tensor negm = map_unary(in[0].value(), [](double v) { return v > 0.0 ? 0.0 : 1.0; });
                        Var dx = add(mul_const(g, pos), mul_scalar(mul_const(g, negm), in[1]));
                        Var da = reshape(sum(mul(g, mul_const(in[0], negm))), in[1].shape());
                        return std::vector<Var>{dx, da};
                      },
                      "prelu");
}

Var pixel_shuffle(const Var& x, int r) {
  require_rank(x, 4, "pixel_shuffle");
  if (r < 1) throw ConfigError("pixel_shuffle: factor must be positive");
  const auto n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (cin % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: " + std::to_string(cin) + " channels not divisible by " + std::to_string(r * r));
  }
  const auto c = cin / (r * r);
  Tensor out({n, c, h * r, w * r});
  const Tensor& in = x.value();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t k = 0; k < c; ++k)
      for (std::int64_t a = 0; a < r; ++a)
        for (std::int64_t bb = 0; bb < r; ++bb) {
          const auto src_c = k * r * r + a * r + bb;
          for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w; ++j) out.at(b, k, i * r + a, j * r + bb) = in.at(b, src_c, i, j);
        }
  return Var::from_op(std::move(out), {x},
                      [r](const Var& g, std::span<const Var>) { return std::vector<Var>{pixel_unshuffle(g, r)}; },
                      "pixel_shuffle");
}

Var pixel_unshuffle(const Var& x, int r) {
  require_rank(x, 4, "pixel_unshuffle");
  if (r < 1) throw ConfigError("pixel_unshuffle: factor must be positive");
  const auto n = x.dim(0), c = x.dim(1), hr = x.dim(2), wr = x.dim(3);
  if (hr % r != 0 || wr % r != 0) throw ShapeError("pixel_unshuffle: spatial size not divisible by factor");
  const auto h = hr / r, w = wr / r;
  Tensor out({n, c * r * r, h, w});
  const Tensor& in = x.value();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t k = 0; k < c; ++k)
      for (std::int64_t a = 0; a < r; ++a)
        for (std::int64_t bb = 0; bb < r; ++bb) {
          const auto dst_c = k * r * r + a * r + bb;
          for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w; ++j) out.at(b, dst_c, i, j) = in.at(b, k, i * r + a, j * r + bb);
        }
  return Var::from_op(std::move(out), {x},
                      [r](const Var& g, std::span<const Var>) { return std::vector<Var>{pixel_shuffle(g, r)}; },
                      "pixel_unshuffle");
}

}  // namespace fhgan::ag
