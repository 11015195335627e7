#include "fhgan/losses.hpp"

#include <cmath>
#include <random>

#include "fhgan/error.hpp"
#include "fhgan/params.hpp"

namespace fhgan::losses {

namespace {

ag::Var mse(const ag::Var& a, const ag::Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  return ag::mean(ag::square(ag::sub(a, b)));
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {pixel, perceptual, adversarial, identity}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and non-negative");
  }
}

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, int width) {
  std::mt19937_64 rng(seed);
  const int channels[] = {3, width, width, 2 * width};
  for (int i = 0; i < 3; ++i) {
    weights_.push_back(init_kernel({channels[i + 1], channels[i], 3, 3}, channels[i] * 9, 0.0, rng));
  }
}

ag::Var RandomConvExtractor::operator()(const ag::Var& images) const {
  ag::Var x = ag::conv2d(images, ag::constant(weights_[0]), 1, 1);
  x = ag::conv2d(ag::leaky_relu(x, 0.0), ag::constant(weights_[1]), 2, 1);
  return ag::conv2d(ag::leaky_relu(x, 0.0), ag::constant(weights_[2]), 2, 1);
}

Shape RandomConvExtractor::output_shape(const Shape& input) const {
  if (input.size() != 4) throw ShapeError("feature extractor expects NCHW input");
  auto down = [](std::int64_t s) { return (s - 1) / 2 + 1; };
  return {input[0], weights_[2].dim(0), down(down(input[2])), down(down(input[3]))};
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name, std::uint64_t seed) {
  if (name == "random_conv") return std::make_unique<RandomConvExtractor>(seed);
  if (name == "identity") return std::make_unique<IdentityExtractor>();
  throw ConfigError("unknown feature extractor '" + name + "'");
}

ag::Var pixel_loss(const ag::Var& hr, const ag::Var& sr) { return mse(hr, sr, "pixel_loss"); }

ag::Var perceptual_loss(const FeatureExtractor& phi, const ag::Var& hr, const ag::Var& sr) {
  if (hr.shape() != sr.shape()) throw ShapeError("perceptual_loss: image shapes differ");
  return mse(phi(hr), phi(sr), "perceptual_loss");
}

ag::Var identity_loss(const EmbedFn& recognizer, const ag::Var& hr, const ag::Var& sr) {
  if (hr.shape() != sr.shape()) throw ShapeError("identity_loss: image shapes differ");
  return mse(recognizer(hr), recognizer(sr), "identity_loss");
}

ag::Var adversarial_g_term(const critic::CriticFn& critic, const ag::Var& sr) {
  if (sr.value().rank() < 1 || sr.dim(0) == 0) throw ShapeError("adversarial_g_term: empty batch");
  return ag::neg(ag::mean(critic(sr)));
}

LossBreakdown total_loss(double pixel, double perceptual, double adversarial, double identity,
                         const LossWeights& weights) {
  LossBreakdown out{pixel, perceptual, adversarial, identity, 0.0};
  out.total = weights.pixel * pixel + weights.perceptual * perceptual + weights.adversarial * adversarial +
              weights.identity * identity;
  return out;
}

}  // namespace fhgan::losses
