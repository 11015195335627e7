#include "fhgan/topology.hpp"

#include <string>

#include "fhgan/error.hpp"

namespace fhgan::topology {

const std::vector<int>& AggregationPlan::of(int layer) const {
  if (layer < 1 || layer > num_layers) {
    throw ConfigError("layer " + std::to_string(layer) + " outside 1.." + std::to_string(num_layers));
  }
  return predecessors[static_cast<std::size_t>(layer - 1)];
}

void BlockSpec::validate() const {
  if (num_layers < 1 || growth_rate < 1 || input_channels < 1 || kernel_size < 1) {
    throw ConfigError("block spec fields must be positive");
  }
  if (kernel_size % 2 == 0) throw ConfigError("block kernel size must be odd");
}

void NetworkSpec::validate() const {
  if (num_blocks < 0) throw ConfigError("num_blocks must be non-negative");
  if (llfe_channels < 1 || bottleneck_channels < 1 || upscale_factor < 1 || upsample_channels < 1) {
    throw ConfigError("network channel counts and upscale factor must be positive");
  }
  if (base < 2) throw ConfigError("aggregation base must be at least 2");
  BlockSpec b = block;
  b.input_channels = llfe_channels;
  b.validate();
}

BlockSpec NetworkSpec::block_spec(int b) const {
  if (b < 0 || b >= num_blocks) throw ConfigError("block index " + std::to_string(b) + " out of range");
  BlockSpec out = block;
  out.input_channels = llfe_channels + b * block.growth_rate;
  return out;
}

std::vector<int> predecessors(int layer, int base) {
  if (base < 2) throw ConfigError("aggregation base must be at least 2, got " + std::to_string(base));
  if (layer < 1) throw ConfigError("layer index must be at least 1, got " + std::to_string(layer));
  std::vector<int> out;
  for (long long offset = 1; offset <= layer; offset *= base) out.push_back(layer - static_cast<int>(offset));
  return out;
}

AggregationPlan build_plan(int num_layers, int base) {
  if (num_layers < 1) throw ConfigError("plan needs at least one layer");
  AggregationPlan plan{num_layers, base, {}};
  for (int l = 1; l <= num_layers; ++l) plan.predecessors.push_back(predecessors(l, base));
  return plan;
}

AggregationPlan build_dense_plan(int num_layers) {
  if (num_layers < 1) throw ConfigError("plan needs at least one layer");
  AggregationPlan plan{num_layers, 0, {}};
  for (int l = 1; l <= num_layers; ++l) {
    std::vector<int> s;
    for (int p = l - 1; p >= 0; --p) s.push_back(p);
    plan.predecessors.push_back(std::move(s));
  }
  return plan;
}

int layer_input_channels(const AggregationPlan& plan, const BlockSpec& block, int layer) {
  int channels = 0;
  for (int p : plan.of(layer)) channels += p == 0 ? block.input_channels : block.growth_rate;
  return channels;
}

std::int64_t parameter_count(const BlockSpec& block, Aggregation mode, int base) {
  const auto plan = mode == Aggregation::sparse ? build_plan(block.num_layers, base) : build_dense_plan(block.num_layers);
  const std::int64_t k2 = static_cast<std::int64_t>(block.kernel_size) * block.kernel_size;
  std::int64_t total = 0;
  for (int l = 1; l <= block.num_layers; ++l) {
    total += k2 * layer_input_channels(plan, block, l) * block.growth_rate;
  }
  return total;
}

std::int64_t parameter_count(const NetworkSpec& spec, Aggregation mode) {
  spec.validate();
  const std::int64_t k2 = static_cast<std::int64_t>(spec.block.kernel_size) * spec.block.kernel_size;
  const std::int64_t r2 = static_cast<std::int64_t>(spec.upscale_factor) * spec.upscale_factor;
  std::int64_t total = k2 * 3 * spec.llfe_channels + k2 * spec.llfe_channels * spec.llfe_channels;
  for (int b = 0; b < spec.num_blocks; ++b) total += parameter_count(spec.block_spec(b), mode, spec.base);
  total += static_cast<std::int64_t>(bottleneck_input_channels(spec)) * spec.bottleneck_channels;
  total += k2 * spec.bottleneck_channels * spec.upsample_channels * r2;
  total += k2 * spec.upsample_channels * 3;
  return total;
}

int depth_accounting(const NetworkSpec& spec) { return 2 + spec.num_blocks * spec.block.num_layers + 3; }

int bottleneck_input_channels(const NetworkSpec& spec) {
  return spec.llfe_channels + spec.num_blocks * spec.block.growth_rate;
}

}  // namespace fhgan::topology
