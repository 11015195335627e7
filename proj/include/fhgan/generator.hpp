#pragma once

// Super-resolution generator: two low-level feature convolutions, a chain of
// sparsely aggregated blocks joined by running concatenation, a 1x1
// bottleneck, one sub-pixel upsampling stage and a 3-channel reconstruction.
//
// Tensors are NCHW batches in the model range [-1, 1].

#include <cstdint>
#include <optional>
#include <vector>

#include "fhgan/autograd.hpp"
#include "fhgan/params.hpp"
#include "fhgan/topology.hpp"

namespace fhgan::generator {

using topology::NetworkSpec;

struct GeneratorParams {
  NetworkSpec spec;
  ParamStore store;
};

// Kernels: fan-in variance scaling; biases 0; PReLU slopes 0.25.
GeneratorParams init_generator(const NetworkSpec& spec, std::uint64_t seed);

// Parameter names used by the store.
std::string layer_name(int block, int layer);  // "block{b}.layer{l}", both 1-based

struct LlfeOutput {
  ag::Var y0;
  ag::Var y1;
};

// Optional probe into one block evaluation: records every layer's
// pre-activation and can replace one layer's output (index 0 = block input)
// with zeros, either everywhere or only in the input of layer `zero_only_in`.
struct BlockTrace {
  std::optional<int> zero_layer;
  std::optional<int> zero_only_in;
  std::vector<Tensor> pre_activations;  // index l - 1
};

LlfeOutput llfe_forward(const NetworkSpec& spec, const Bindings& params, const ag::Var& lr);

// Block `block` (0-based). Returns the last layer's output (growth-rate channels).
ag::Var sparse_block_forward(const NetworkSpec& spec, const Bindings& params, int block,
                             const topology::AggregationPlan& plan, const ag::Var& x, BlockTrace* trace = nullptr);

ag::Var bottleneck_forward(const NetworkSpec& spec, const Bindings& params, const ag::Var& x);

// Convolution to C_u * r^2 channels, pixel shuffle by r, PReLU.
ag::Var upsample_forward(const NetworkSpec& spec, const Bindings& params, const ag::Var& x);

// Linear 3x3 convolution to RGB. No activation and no clamping.
ag::Var reconstruct_forward(const NetworkSpec& spec, const Bindings& params, const ag::Var& x);

ag::Var generator_forward(const NetworkSpec& spec, const Bindings& params, const ag::Var& lr);

// Gradient-free inference. Accepts [3,h,w] or [N,3,h,w].
Tensor generate(const GeneratorParams& params, const Tensor& lr);

}  // namespace fhgan::generator
