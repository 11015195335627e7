#pragma once

// Generator-side objectives: pixel, perceptual, identity and adversarial
// terms, and their weighted total.
//
// Every squared-error term is a mean over batch AND elements, so the weights
// do not depend on resolution or embedding size.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "fhgan/autograd.hpp"
#include "fhgan/critic.hpp"

namespace fhgan::losses {

struct LossWeights {
  double pixel = 1.0;
  double perceptual = 0.05;
  double adversarial = 0.001;
  double identity = 0.01;

  void validate() const;
};

struct LossBreakdown {
  double pixel = 0.0;
  double perceptual = 0.0;
  double adversarial = 0.0;
  double identity = 0.0;
  double total = 0.0;
};

// Fixed differentiable map from image batches to feature maps. Never trained.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual ag::Var operator()(const ag::Var& images) const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual std::string name() const = 0;
};

class IdentityExtractor final : public FeatureExtractor {
 public:
  ag::Var operator()(const ag::Var& images) const override { return images; }
  Shape output_shape(const Shape& input) const override { return input; }
  std::string name() const override { return "identity"; }
};

class ScaledExtractor final : public FeatureExtractor {
 public:
  explicit ScaledExtractor(double factor) : factor_(factor) {}
  ag::Var operator()(const ag::Var& images) const override { return ag::scale(images, factor_); }
  Shape output_shape(const Shape& input) const override { return input; }
  std::string name() const override { return "scaled"; }

 private:
  double factor_;
};

// Small convolutional stack with seeded random weights standing in for a
// pretrained classification network: three 3x3 convolutions (the last two
// stride 2) with ReLU between them; the output is the last convolution.
class RandomConvExtractor final : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed, int width = 16);
  ag::Var operator()(const ag::Var& images) const override;
  Shape output_shape(const Shape& input) const override;
  std::string name() const override { return "random_conv"; }

 private:
  std::vector<Tensor> weights_;
};

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name, std::uint64_t seed);

using EmbedFn = std::function<ag::Var(const ag::Var& images)>;

ag::Var pixel_loss(const ag::Var& hr, const ag::Var& sr);
ag::Var perceptual_loss(const FeatureExtractor& phi, const ag::Var& hr, const ag::Var& sr);
ag::Var identity_loss(const EmbedFn& recognizer, const ag::Var& hr, const ag::Var& sr);
// -mean D(sr).
ag::Var adversarial_g_term(const critic::CriticFn& critic, const ag::Var& sr);

LossBreakdown total_loss(double pixel, double perceptual, double adversarial, double identity,
                         const LossWeights& weights);

}  // namespace fhgan::losses
