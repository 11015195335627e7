#include <doctest.h>

#include "fhgan/error.hpp"
#include "fhgan/losses.hpp"
#include "fhgan/recognizer.hpp"
#include "support.hpp"

using namespace fhgan;
using namespace fhgan::losses;
using fhgan::testing::numeric_gradient;
using fhgan::testing::random_tensor;
using fhgan::testing::relative_error;

namespace {

double value(const ag::Var& v) { return ag::value_of(v); }

Tensor grad_of(const std::function<ag::Var(const ag::Var&)>& f, const Tensor& x0) {
  ag::Var x(x0, true);
  return ag::grad(f(x), std::span<const ag::Var>(&x, 1))[0].value();
}

}  // namespace

TEST_CASE("pixel loss examples") {
  const auto hr = ag::constant(Tensor({1, 2}, std::vector<double>{1, 3}));
  const auto sr = ag::constant(Tensor({1, 2}, std::vector<double>{0, 1}));
  CHECK(value(pixel_loss(hr, sr)) == 2.5);
  CHECK(value(pixel_loss(hr, hr)) == 0.0);
  const auto a = random_tensor({2, 3, 4, 4}, 1);
  const auto b = random_tensor({2, 3, 4, 4}, 2);
  Tensor far = b;
  for (std::int64_t i = 0; i < far.size(); ++i) far[i] = a[i] + 3.0 * (b[i] - a[i]);
  CHECK(value(pixel_loss(ag::constant(a), ag::constant(far))) ==
        doctest::Approx(9.0 * value(pixel_loss(ag::constant(a), ag::constant(b)))));
  CHECK_THROWS_AS(pixel_loss(hr, ag::constant(Tensor({2, 1}))), ShapeError);
}

TEST_CASE("perceptual loss reductions") {
  const auto a = ag::constant(random_tensor({2, 3, 8, 8}, 3));
  const auto b = ag::constant(random_tensor({2, 3, 8, 8}, 4));
  const double pixel = value(pixel_loss(a, b));
  CHECK(value(perceptual_loss(IdentityExtractor{}, a, b)) == pixel);
  CHECK(value(perceptual_loss(ScaledExtractor{2.0}, a, b)) == doctest::Approx(4.0 * pixel));
  const RandomConvExtractor phi(5);
  CHECK(value(perceptual_loss(phi, a, a)) == 0.0);
  CHECK(phi(a).shape() == phi.output_shape(a.shape()));
  CHECK(phi.output_shape({1, 3, 112, 112}) == Shape{1, 32, 28, 28});
  CHECK(value(perceptual_loss(phi, a, b)) > 0.0);
  CHECK(value(perceptual_loss(phi, a, b)) == value(perceptual_loss(RandomConvExtractor(5), a, b)));
  CHECK_THROWS_AS(perceptual_loss(phi, a, ag::constant(Tensor({2, 3, 4, 4}))), ShapeError);
  CHECK_THROWS_AS(make_extractor("vgg", 0), ConfigError);
  CHECK(make_extractor("identity", 0)->name() == "identity");
}

TEST_CASE("identity loss") {
  recognizer::RecognizerSpec spec;
  spec.input_size = 16;
  spec.stem_channels = 3;
  spec.unit_widths = {4};
  spec.unit_strides = {2};
  spec.embedding_dim = 6;
  recognizer::ArcFaceConfig arc;
  arc.num_classes = 2;
  arc.embedding_dim = 6;
  const auto p = recognizer::init_recognizer(spec, arc, 6);
  Bindings b(p.backbone, false);
  const EmbedFn fr = [&](const ag::Var& x) { return recognizer::embed(spec, b, x); };
  const auto hr = random_tensor({2, 3, 16, 16}, 7);
  const auto sr = random_tensor({2, 3, 16, 16}, 8);
  CHECK(value(identity_loss(fr, ag::constant(hr), ag::constant(hr))) == 0.0);

  const auto e_hr = recognizer::embed_images(p, hr), e_sr = recognizer::embed_images(p, sr);
  double expected = 0.0;
  for (std::int64_t i = 0; i < e_hr.size(); ++i) expected += (e_hr[i] - e_sr[i]) * (e_hr[i] - e_sr[i]);
  CHECK(value(identity_loss(fr, ag::constant(hr), ag::constant(sr))) == doctest::Approx(expected / 12.0));

  const auto analytic = grad_of([&](const ag::Var& x) { return identity_loss(fr, ag::constant(hr), x); }, sr);
  const auto numeric = numeric_gradient(
      [&](const Tensor& t) { return value(identity_loss(fr, ag::constant(hr), ag::constant(t))); }, sr);
  CHECK(relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("pixel and perceptual gradients match central differences") {
  const auto hr = random_tensor({1, 3, 8, 8}, 9);
  const auto sr = random_tensor({1, 3, 8, 8}, 10);
  const RandomConvExtractor phi(11, 4);
  auto check = [&](const std::function<ag::Var(const ag::Var&)>& f) {
    const auto numeric = numeric_gradient([&](const Tensor& t) { return value(f(ag::constant(t))); }, sr);
    return relative_error(grad_of(f, sr), numeric);
  };
  CHECK(check([&](const ag::Var& x) { return pixel_loss(ag::constant(hr), x); }) < 1e-4);
  CHECK(check([&](const ag::Var& x) { return perceptual_loss(phi, ag::constant(hr), x); }) < 1e-4);
}

TEST_CASE("adversarial generator term") {
  const critic::CriticFn mean_pixel = [](const ag::Var& x) {
    return ag::scale(ag::sum_per_sample(x), 1.0 / static_cast<double>(x.value().size() / x.dim(0)));
  };
  const auto sr = ag::constant(Tensor({2, 1, 1, 2}, std::vector<double>{1, 3, 5, 7}));
  CHECK(value(adversarial_g_term(mean_pixel, sr)) == -4.0);
  CHECK_THROWS_AS(adversarial_g_term(mean_pixel, ag::constant(Tensor({0, 1}))), ShapeError);
}

TEST_CASE("weighted total") {
  const LossWeights w{1.0, 0.5, 0.25, 2.0};
  const auto b = total_loss(2.0, 4.0, -8.0, 0.5, w);
  CHECK(b.total == 2.0 + 2.0 - 2.0 + 1.0);
  CHECK(b.pixel == 2.0);
  CHECK(b.adversarial == -8.0);
  const auto only_pixel = total_loss(0.3, 100.0, 100.0, 100.0, LossWeights{1, 0, 0, 0});
  CHECK(only_pixel.total == 0.3);
  CHECK_THROWS_AS((LossWeights{-1, 0, 0, 0}.validate()), ConfigError);
  CHECK_THROWS_AS((LossWeights{std::nan(""), 0, 0, 0}.validate()), ConfigError);
}
