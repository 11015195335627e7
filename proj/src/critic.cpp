#include "fhgan/critic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fhgan/error.hpp"

namespace fhgan::critic {

namespace {

constexpr int kStride = 2;

int padding_for(int kernel) { return (kernel - 1) / 2; }

std::string conv_name(int i) { return "conv" + std::to_string(i + 1); }

}  // namespace

void CriticSpec::validate() const {
  if (input_channels < 1 || input_size < 1 || base_channels < 1 || max_channels < 1 || num_layers < 1 ||
      kernel_size < 1) {
    throw ConfigError("critic spec fields must be positive");
  }
  if (output_size() < 1) {
    throw ConfigError("critic with " + std::to_string(num_layers) + " stride-2 layers cannot process " +
                      std::to_string(input_size) + "px inputs");
  }
}

std::vector<int> CriticSpec::layer_channels() const {
  std::vector<int> out;
  long long c = base_channels;
  for (int i = 0; i < num_layers; ++i) {
    out.push_back(static_cast<int>(std::min<long long>(c, max_channels)));
    c *= 2;
  }
  return out;
}

int CriticSpec::output_size() const {
  int s = input_size;
  const int pad = padding_for(kernel_size);
  for (int i = 0; i < num_layers; ++i) {
    const int span = s + 2 * pad - kernel_size;
    if (span < 0) return 0;
    s = span / kStride + 1;
  }
  return s;
}

CriticParams init_critic(const CriticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  CriticParams out{spec, {}};
  int in_c = spec.input_channels;
  const int k = spec.kernel_size;
  for (int i = 0; const int c : spec.layer_channels()) {
    out.store.add(conv_name(i) + ".weight",
                  init_kernel({c, in_c, k, k}, static_cast<std::int64_t>(in_c) * k * k, spec.leaky_slope, rng));
    out.store.add(conv_name(i) + ".bias", Tensor({c}));
    in_c = c;
    ++i;
  }
  const std::int64_t features = static_cast<std::int64_t>(in_c) * spec.output_size() * spec.output_size();
  out.store.add("head.weight", init_kernel({features, 1}, features, 1.0, rng));
  out.store.add("head.bias", Tensor({1}));
  return out;
}

ag::Var critic_forward(const CriticSpec& spec, const Bindings& params, const ag::Var& images) {
  if (images.value().rank() != 4 || images.dim(1) != spec.input_channels || images.dim(2) != spec.input_size ||
      images.dim(3) != spec.input_size) {
    throw ShapeError("critic expects [N," + std::to_string(spec.input_channels) + "," +
                     std::to_string(spec.input_size) + "," + std::to_string(spec.input_size) + "], got " +
                     to_string(images.shape()));
  }
  ag::Var x = images;
  const int pad = padding_for(spec.kernel_size);
  for (int i = 0; i < spec.num_layers; ++i) {
    x = ag::add_channel_bias(ag::conv2d(x, params[conv_name(i) + ".weight"], kStride, pad),
                             params[conv_name(i) + ".bias"]);
    x = ag::leaky_relu(x, spec.leaky_slope);
  }
  const auto n = x.dim(0);
  x = ag::reshape(x, {n, x.value().size() / n});
  x = ag::add_channel_bias(ag::matmul(x, params["head.weight"]), params["head.bias"]);
  return ag::reshape(x, {n});
}

Tensor critic_scores(const CriticParams& params, const Tensor& images) {
  ag::NoGradGuard no_grad;
  Bindings bound(params.store, false);
  return critic_forward(params.spec, bound, ag::constant(images)).value();
}

Tensor interpolate(const Tensor& hr, const Tensor& sr, double epsilon) {
  if (hr.shape() != sr.shape()) throw ShapeError("interpolate: shape mismatch");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("interpolate: epsilon outside [0,1]");
  Tensor out(hr.shape());
  for (std::int64_t i = 0; i < hr.size(); ++i) out[i] = epsilon * hr[i] + (1.0 - epsilon) * sr[i];
  return out;
}

Tensor interpolate_batch(const Tensor& hr, const Tensor& sr, std::span<const double> epsilons) {
  if (hr.shape() != sr.shape()) throw ShapeError("interpolate_batch: shape mismatch");
  if (hr.rank() < 1 || static_cast<std::size_t>(hr.dim(0)) != epsilons.size()) {
    throw ShapeError("interpolate_batch: need one epsilon per sample");
  }
  Tensor out(hr.shape());
  const auto inner = hr.dim(0) == 0 ? 0 : hr.size() / hr.dim(0);
  for (std::int64_t n = 0; n < hr.dim(0); ++n) {
    const double e = epsilons[static_cast<std::size_t>(n)];
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("interpolate_batch: epsilon outside [0,1]");
    for (std::int64_t i = n * inner; i < (n + 1) * inner; ++i) out[i] = e * hr[i] + (1.0 - e) * sr[i];
  }
  return out;
}

ag::Var gradient_penalty(const CriticFn& critic, const Tensor& interpolated, double lambda) {
  if (lambda == 0.0) return ag::constant(Tensor::scalar(0.0));
  // The input gradient is needed even when the caller only wants a value for logging.
  const bool outer = ag::grad_enabled();
  ag::Var g;
  {
    ag::GradModeGuard on(true);
    ag::Var x(interpolated, true);
    ag::Var scores = critic(x);
    // Samples are independent (no batch statistics), so d sum / d x_n = d D(x_n) / d x_n.
    g = ag::grad(ag::sum(scores), std::span<const ag::Var>(&x, 1), {}, outer)[0];
  }
  if (!g.value().all_finite()) throw TrainingFault("gradient penalty: non-finite critic input gradient");
  // The 1e-12 keeps the norm differentiable at a zero gradient.
  ag::Var norms = ag::sqrt(ag::add_scalar(ag::sum_per_sample(ag::square(g)), 1e-12));
  return ag::scale(ag::mean(ag::square(ag::add_scalar(norms, -1.0))), lambda);
}

ag::Var critic_loss(const CriticFn& critic, const ag::Var& hr, const ag::Var& sr, const ag::Var& penalty) {
  if (hr.value().rank() < 1 || hr.dim(0) == 0 || sr.value().rank() < 1 || sr.dim(0) == 0) {
    throw ShapeError("critic_loss: empty batch");
  }
  if (hr.dim(0) != sr.dim(0)) throw ShapeError("critic_loss: batch sizes differ");
  return ag::add(ag::sub(ag::mean(critic(sr)), ag::mean(critic(hr))), penalty);
}

}  // namespace fhgan::critic
