#include "fhgan/generator.hpp"

#include <random>
#include <string>

#include "fhgan/error.hpp"

namespace fhgan::generator {

namespace {

constexpr double kPreluInit = 0.25;

void add_conv(ParamStore& store, const std::string& prefix, int in_c, int out_c, int k, bool activation,
              std::mt19937_64& rng) {
  const std::int64_t fan_in = static_cast<std::int64_t>(in_c) * k * k;
  store.add(prefix + ".weight", init_kernel({out_c, in_c, k, k}, fan_in, activation ? kPreluInit : 1.0, rng));
  store.add(prefix + ".bias", Tensor({out_c}));
  if (activation) store.add(prefix + ".prelu", Tensor({1}, kPreluInit));
}

ag::Var conv(const Bindings& p, const std::string& prefix, const ag::Var& x) {
  const auto& w = p[prefix + ".weight"];
  const int pad = static_cast<int>(w.dim(2) / 2);
  return ag::add_channel_bias(ag::conv2d(x, w, 1, pad), p[prefix + ".bias"]);
}

ag::Var conv_prelu(const Bindings& p, const std::string& prefix, const ag::Var& x) {
  return ag::prelu(conv(p, prefix, x), p[prefix + ".prelu"]);
}

}  // namespace

std::string layer_name(int block, int layer) {
  return "block" + std::to_string(block) + ".layer" + std::to_string(layer);
}

GeneratorParams init_generator(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  GeneratorParams out{spec, {}};
  const int k = spec.block.kernel_size;
  add_conv(out.store, "llfe0", 3, spec.llfe_channels, k, true, rng);
  add_conv(out.store, "llfe1", spec.llfe_channels, spec.llfe_channels, k, true, rng);
  const auto plan = topology::build_plan(spec.block.num_layers, spec.base);
  for (int b = 0; b < spec.num_blocks; ++b) {
    const auto block = spec.block_spec(b);
    for (int l = 1; l <= block.num_layers; ++l) {
      add_conv(out.store, layer_name(b + 1, l), topology::layer_input_channels(plan, block, l), block.growth_rate, k,
               true, rng);
    }
  }
  add_conv(out.store, "bottleneck", topology::bottleneck_input_channels(spec), spec.bottleneck_channels, 1, true, rng);
  add_conv(out.store, "upsample", spec.bottleneck_channels,
           spec.upsample_channels * spec.upscale_factor * spec.upscale_factor, k, true, rng);
  add_conv(out.store, "reconstruct", spec.upsample_channels, 3, k, false, rng);
  return out;
}

LlfeOutput llfe_forward(const NetworkSpec&, const Bindings& params, const ag::Var& lr) {
  if (lr.value().rank() != 4 || lr.dim(1) != 3) {
    throw ShapeError("generator input must be [N,3,h,w], got " + to_string(lr.shape()));
  }
  LlfeOutput out;
  out.y0 = conv_prelu(params, "llfe0", lr);
  out.y1 = conv_prelu(params, "llfe1", out.y0);
  return out;
}

ag::Var sparse_block_forward(const NetworkSpec& spec, const Bindings& params, int block,
                             const topology::AggregationPlan& plan, const ag::Var& x, BlockTrace* trace) {
  const auto bs = spec.block_spec(block);
  if (plan.num_layers != bs.num_layers) throw ConfigError("aggregation plan does not match block depth");
  if (x.value().rank() != 4 || x.dim(1) != bs.input_channels) {
    throw ShapeError("block " + std::to_string(block + 1) + " expects " + std::to_string(bs.input_channels) +
                     " input channels, got " + to_string(x.shape()));
  }
  if (trace) trace->pre_activations.assign(static_cast<std::size_t>(bs.num_layers), Tensor{});
  std::vector<ag::Var> outputs{x};
  outputs.reserve(static_cast<std::size_t>(bs.num_layers) + 1);
  for (int l = 1; l <= bs.num_layers; ++l) {
    std::vector<ag::Var> parts;
    for (int p : plan.of(l)) {
      const auto& y = outputs[static_cast<std::size_t>(p)];
      const bool zeroed = trace && trace->zero_layer == p && trace->zero_only_in == l;
      parts.push_back(zeroed ? ag::constant(Tensor(y.shape())) : y);
    }
    const ag::Var input = parts.size() == 1 ? parts.front() : ag::concat(parts, 1);
    const auto name = layer_name(block + 1, l);
    ag::Var pre = conv(params, name, input);
    if (trace) trace->pre_activations[static_cast<std::size_t>(l - 1)] = pre.value();
    ag::Var y = ag::prelu(pre, params[name + ".prelu"]);
    if (trace && trace->zero_layer == l && !trace->zero_only_in) y = ag::constant(Tensor(y.shape()));
    outputs.push_back(y);
  }
  return outputs.back();
}

ag::Var bottleneck_forward(const NetworkSpec& spec, const Bindings& params, const ag::Var& x) {
  const int expected = topology::bottleneck_input_channels(spec);
  if (x.value().rank() != 4 || x.dim(1) != expected) {
    throw ShapeError("bottleneck expects " + std::to_string(expected) + " channels, got " + to_string(x.shape()));
  }
  return conv_prelu(params, "bottleneck", x);
}

ag::Var upsample_forward(const NetworkSpec& spec, const Bindings& params, const ag::Var& x) {
  if (x.value().rank() != 4 || x.dim(1) != spec.bottleneck_channels) {
    throw ShapeError("upsampling expects " + std::to_string(spec.bottleneck_channels) + " channels, got " +
                     to_string(x.shape()));
  }
  ag::Var shuffled = ag::pixel_shuffle(conv(params, "upsample", x), spec.upscale_factor);
  return ag::prelu(shuffled, params["upsample.prelu"]);
}

ag::Var reconstruct_forward(const NetworkSpec& spec, const Bindings& params, const ag::Var& x) {
  if (x.value().rank() != 4 || x.dim(1) != spec.upsample_channels) {
    throw ShapeError("reconstruction expects " + std::to_string(spec.upsample_channels) + " channels, got " +
                     to_string(x.shape()));
  }
  return conv(params, "reconstruct", x);
}

ag::Var generator_forward(const NetworkSpec& spec, const Bindings& params, const ag::Var& lr) {
  const auto llfe = llfe_forward(spec, params, lr);
  const auto plan = topology::build_plan(spec.block.num_layers, spec.base);
  std::vector<ag::Var> features{llfe.y1};
  for (int b = 0; b < spec.num_blocks; ++b) {
    const ag::Var input = features.size() == 1 ? features.front() : ag::concat(features, 1);
    features.push_back(sparse_block_forward(spec, params, b, plan, input));
  }
  const ag::Var merged = features.size() == 1 ? features.front() : ag::concat(features, 1);
  return reconstruct_forward(spec, params, upsample_forward(spec, params, bottleneck_forward(spec, params, merged)));
}

Tensor generate(const GeneratorParams& params, const Tensor& lr) {
  ag::NoGradGuard no_grad;
  const bool single = lr.rank() == 3;
  Tensor batch = single ? lr.reshaped({1, lr.dim(0), lr.dim(1), lr.dim(2)}) : lr;
  Bindings bound(params.store, false);
  Tensor out = generator_forward(params.spec, bound, ag::constant(std::move(batch))).value();
  if (single) out = out.reshaped({out.dim(1), out.dim(2), out.dim(3)});
  return out;
}

}  // namespace fhgan::generator
