#pragma once

// Small model specs and a cached toy dataset shared by the engine-level tests.

#include <filesystem>

#include "fhgan/data.hpp"
#include "fhgan/engine.hpp"
#include "support.hpp"

namespace fhgan::testing {

inline engine::ModelSpecs small_models(int num_classes) {
  engine::ModelSpecs s;
  s.generator.num_blocks = 1;
  s.generator.block.num_layers = 2;
  s.generator.block.growth_rate = 4;
  s.generator.llfe_channels = 8;
  s.generator.block.input_channels = 8;
  s.generator.bottleneck_channels = 8;
  s.generator.upsample_channels = 4;
  s.critic.base_channels = 4;
  s.critic.max_channels = 16;
  s.recognizer.stem_channels = 4;
  s.recognizer.unit_widths = {4, 8};
  s.recognizer.unit_strides = {2, 2};
  s.recognizer.embedding_dim = 8;
  s.arcface.num_classes = num_classes;
  s.arcface.embedding_dim = 8;
  return s;
}

// 4 identities x 2 training images, written once per process.
inline const data::Manifest& toy_manifest() {
  static const data::Manifest manifest = [] {
    data::SynthOptions opt;
    opt.num_identities = 4;
    opt.images_per_identity = 2;
    opt.seed = 3;
    return data::synth_toy_dataset(opt, temp_dir("shared_toy"));
  }();
  return manifest;
}

}  // namespace fhgan::testing
