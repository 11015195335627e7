#pragma once

// Wasserstein critic without normalization layers and the gradient-penalty
// objective.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fhgan/autograd.hpp"
#include "fhgan/params.hpp"

namespace fhgan::critic {

// Stride-2 convolutions doubling channels (capped), leaky activations, linear scalar head.
struct CriticSpec {
  int input_channels = 3;
  int input_size = 112;
  int base_channels = 64;
  int max_channels = 512;
  int num_layers = 5;
  int kernel_size = 4;
  double leaky_slope = 0.2;

  void validate() const;
  std::vector<int> layer_channels() const;
  int output_size() const;  // spatial extent after the last convolution
};

struct CriticParams {
  CriticSpec spec;
  ParamStore store;
};

CriticParams init_critic(const CriticSpec& spec, std::uint64_t seed);

// Scores [N] for images [N,C,S,S]; higher means more real.
ag::Var critic_forward(const CriticSpec& spec, const Bindings& params, const ag::Var& images);
Tensor critic_scores(const CriticParams& params, const Tensor& images);

// Maps an image batch to one score per sample.
using CriticFn = std::function<ag::Var(const ag::Var& images)>;

// epsilon * hr + (1 - epsilon) * sr.
Tensor interpolate(const Tensor& hr, const Tensor& sr, double epsilon);
// Per-sample interpolation of [N,...] batches with one epsilon per sample.
Tensor interpolate_batch(const Tensor& hr, const Tensor& sr, std::span<const double> epsilons);

// lambda * mean_n (||d D(x_n) / d x_n||_2 - 1)^2, differentiable with respect to the critic parameters.
ag::Var gradient_penalty(const CriticFn& critic, const Tensor& interpolated, double lambda);

// mean D(sr) - mean D(hr) + penalty.
ag::Var critic_loss(const CriticFn& critic, const ag::Var& hr, const ag::Var& sr, const ag::Var& penalty);

}  // namespace fhgan::critic
