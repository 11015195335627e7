#pragma once

// Versioned, CRC-verified container for models and training state.
//
// Layout (little-endian): magic "FHGANCKP", u32 version, u64 payload size,
// u32 crc32(payload), payload. The payload is a sequence of tagged entries
// (u8 tag, u32 name length, name, value) where the tag is T (tensor: u32 rank,
// i64 dims, f64 values), I (i64), F (f64) or S (u32 length, bytes).

#include <cstdint>
#include <filesystem>
#include <string>

#include "fhgan/engine.hpp"

namespace fhgan::engine {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointBundle {
  Models models;
  TrainState state;
  std::string config_digest;
};

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path);
CheckpointBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace fhgan::engine
