#pragma once

// Connectivity and size accounting for sparsely aggregated convolution blocks.
//
// Inside a block, layer l (1-based) concatenates the outputs of layers
// l - c^j for every j >= 0 with c^j <= l. Index 0 is the block input. The
// dense counterpart connects every earlier layer.

#include <cstdint>
#include <vector>

namespace fhgan::topology {

enum class Aggregation { sparse, dense };

struct AggregationPlan {
  int num_layers = 0;
  int base = 2;
  // predecessors[l - 1] is the descending index set S(l).
  std::vector<std::vector<int>> predecessors;

  const std::vector<int>& of(int layer) const;
};

struct BlockSpec {
  int num_layers = 6;
  int growth_rate = 32;
  int input_channels = 64;
  int kernel_size = 3;

  void validate() const;
};

struct NetworkSpec {
  int num_blocks = 6;
  int llfe_channels = 64;
  int bottleneck_channels = 128;
  int upscale_factor = 4;
  int upsample_channels = 16;
  int base = 2;
  BlockSpec block{};

  void validate() const;
  // Spec of block b (0-based); its input is the LLFE output plus all earlier block outputs.
  BlockSpec block_spec(int b) const;
};

// S(l) sorted descending. Throws ConfigError for l < 1 or c < 2.
std::vector<int> predecessors(int layer, int base);

AggregationPlan build_plan(int num_layers, int base);
AggregationPlan build_dense_plan(int num_layers);

// Channels entering layer l: C_in for index 0, growth rate for every other predecessor.
int layer_input_channels(const AggregationPlan& plan, const BlockSpec& block, int layer);

// Kernel parameters (biases excluded) of one block.
std::int64_t parameter_count(const BlockSpec& block, Aggregation mode, int base = 2);
// Kernel parameters (biases excluded) of the whole generator. Only the intra-block
// links differ between modes.
std::int64_t parameter_count(const NetworkSpec& spec, Aggregation mode);

// LLFE pair + block layers + bottleneck + upsampling + reconstruction.
int depth_accounting(const NetworkSpec& spec);

int bottleneck_input_channels(const NetworkSpec& spec);

}  // namespace fhgan::topology
