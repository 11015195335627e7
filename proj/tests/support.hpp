#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "fhgan/autograd.hpp"
#include "fhgan/params.hpp"
#include "fhgan/tensor.hpp"

namespace fhgan::testing {

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(shape);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

inline Tensor uniform_tensor(const Shape& shape, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// max |analytic - numeric| / max(max |numeric|, floor): error relative to the gradient's scale.
inline double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-10) {
  double diff = 0.0, scale = floor;
  for (std::int64_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return diff / scale;
}

// Central differences of a scalar function of one tensor.
inline Tensor numeric_gradient(const std::function<double(const Tensor&)>& f, Tensor x, double h = 1e-6) {
  Tensor g(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// Worst relative error over every tensor of a store, for loss(store) built on Bindings.
inline double store_gradient_error(const std::function<ag::Var(const Bindings&)>& loss, const ParamStore& store,
                                   double h = 1e-6) {
  Bindings bound(store, true);
  const auto analytic = gradients(loss(bound), bound);
  double worst = 0.0;
  for (std::size_t k = 0; k < store.size(); ++k) {
    const auto numeric = numeric_gradient(
        [&](const Tensor& t) {
          ParamStore probe = store;
          probe.tensors()[k] = t;
          ag::NoGradGuard no_grad;
          return ag::value_of(loss(Bindings(probe, false)));
        },
        store.tensors()[k], h);
    worst = std::max(worst, relative_error(analytic.tensors()[k], numeric));
  }
  return worst;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fhgan_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fhgan::testing
