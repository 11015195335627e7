#include <doctest.h>

#include <cmath>

#include "fhgan/critic.hpp"
#include "fhgan/error.hpp"
#include "support.hpp"

using namespace fhgan;
using namespace fhgan::critic;
using fhgan::testing::random_tensor;

namespace {

CriticSpec toy_spec() {
  CriticSpec s;
  s.input_size = 8;
  s.base_channels = 4;
  s.max_channels = 6;
  s.num_layers = 2;
  return s;
}

// D(x) = <w, x> per sample, with w scaled to the requested norm.
CriticFn linear_critic(const Tensor& direction, double norm) {
  double n2 = 0.0;
  for (double v : direction.values()) n2 += v * v;
  Tensor w = direction;
  for (auto& v : w.values()) v *= norm / std::sqrt(n2);
  return [w](const ag::Var& x) {
    const auto n = x.dim(0);
    const auto flat = ag::reshape(x, {n, w.size()});
    return ag::reshape(ag::matmul(flat, ag::constant(w.reshaped({w.size(), 1}))), {n});
  };
}

}  // namespace

TEST_CASE("default layout for 112px inputs") {
  const CriticSpec spec;
  CHECK(spec.layer_channels() == std::vector<int>{64, 128, 256, 512, 512});
  CHECK(spec.output_size() == 3);
  const auto p = init_critic(spec, 1);
  CHECK(p.store.get("head.weight").shape() == Shape{512 * 9, 1});
  for (const auto& name : p.store.names()) CHECK(name.find("norm") == std::string::npos);
}

TEST_CASE("zero weights give the head bias; forward is deterministic") {
  const auto spec = toy_spec();
  auto p = init_critic(spec, 2);
  const auto x = random_tensor({3, 3, 8, 8}, 3);
  const auto s = critic_scores(p, x);
  CHECK(s.shape() == Shape{3});
  CHECK(s.all_finite());
  CHECK(s == critic_scores(p, x));
  for (auto& t : p.store.tensors()) t.fill(0.0);
  p.store.get("head.bias")[0] = 1.25;
  const auto biased = critic_scores(p, x);
  for (double v : biased.values()) CHECK(v == 1.25);
  CHECK_THROWS_AS(critic_scores(p, Tensor({1, 3, 9, 9})), ShapeError);
}

TEST_CASE("interpolation") {
  const Tensor hr({2, 3}, 1.0), sr({2, 3}, 0.0);
  CHECK(interpolate(hr, sr, 1.0) == hr);
  CHECK(interpolate(hr, sr, 0.0) == sr);
  CHECK(interpolate(hr, sr, 0.25) == Tensor({2, 3}, 0.25));
  CHECK_THROWS_AS(interpolate(hr, sr, 1.5), ConfigError);
  CHECK_THROWS_AS(interpolate(hr, Tensor({3, 2}), 0.5), ShapeError);
  const double eps[] = {0.0, 1.0};
  const auto b = interpolate_batch(hr, sr, eps);
  CHECK(b == Tensor({2, 3}, std::vector<double>{0, 0, 0, 1, 1, 1}));
}

TEST_CASE("gradient penalty of a linear critic is lambda (|w| - 1)^2") {
  const auto direction = random_tensor({3, 4, 4}, 4);
  const auto x = random_tensor({5, 3, 4, 4}, 5);
  for (double norm : {0.5, 1.0, 3.0}) {
    const auto gp = ag::value_of(gradient_penalty(linear_critic(direction, norm), x, 10.0));
    CHECK(std::abs(gp - 10.0 * (norm - 1.0) * (norm - 1.0)) < 1e-6);
  }
  CHECK(ag::value_of(gradient_penalty(linear_critic(direction, 3.0), x, 0.0)) == 0.0);
  ag::NoGradGuard no_grad;
  CHECK(std::abs(ag::value_of(gradient_penalty(linear_critic(direction, 3.0), x, 10.0)) - 40.0) < 1e-6);
}

TEST_CASE("critic loss arithmetic") {
  const Tensor hr({2, 1}, std::vector<double>{2, 4}), sr({2, 1}, std::vector<double>{1, 1});
  const CriticFn identity = [](const ag::Var& x) { return ag::reshape(x, {x.dim(0)}); };
  const auto zero = ag::constant(Tensor::scalar(0.0));
  CHECK(ag::value_of(critic_loss(identity, ag::constant(hr), ag::constant(sr), zero)) == -2.0);
  CHECK(ag::value_of(critic_loss(identity, ag::constant(hr), ag::constant(hr), zero)) == 0.0);
  const auto forty = ag::constant(Tensor::scalar(40.0));
  CHECK(ag::value_of(critic_loss(identity, ag::constant(hr), ag::constant(sr), forty)) -
            ag::value_of(critic_loss(identity, ag::constant(hr), ag::constant(sr), zero)) ==
        40.0);
  CHECK_THROWS_AS(critic_loss(identity, ag::constant(Tensor({0, 1})), ag::constant(Tensor({0, 1})), zero),
                  ShapeError);
}

TEST_CASE("toy critic input gradients match central differences") {
  const auto spec = toy_spec();
  auto p = init_critic(spec, 6);
  for (std::size_t i = 0; i < p.store.size(); ++i) {
    if (p.store.names()[i].ends_with(".bias")) p.store.tensors()[i] = random_tensor(p.store.tensors()[i].shape(), 7 + i, 0.1);
  }
  Bindings b(p.store, false);
  const auto x0 = random_tensor({1, 3, 8, 8}, 8);
  ag::Var x(x0, true);
  const auto analytic = ag::grad(ag::sum(critic_forward(spec, b, x)), std::span<const ag::Var>(&x, 1))[0].value();
  const auto numeric = fhgan::testing::numeric_gradient(
      [&](const Tensor& t) { return critic_scores(p, t)[0]; }, x0);
  CHECK(fhgan::testing::relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("penalty gradient with respect to critic parameters matches finite differences") {
  const auto spec = toy_spec();
  const auto p = init_critic(spec, 9);
  const auto x = random_tensor({2, 3, 8, 8}, 10);
  const double err = fhgan::testing::store_gradient_error(
      [&](const Bindings& b) {
        return gradient_penalty([&](const ag::Var& v) { return critic_forward(spec, b, v); }, x, 10.0);
      },
      p.store, 1e-5);
  CHECK(err < 1e-4);
}
