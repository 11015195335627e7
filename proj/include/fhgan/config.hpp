#pragma once

// Flat `key = value` run configuration. Every key has a documented default;
// unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fhgan/engine.hpp"
#include "fhgan/metrics.hpp"

namespace fhgan {

enum class ValueType { integer, real, boolean, text, int_list };

struct ConfigKey {
  std::string name;
  ValueType type;
  std::string default_value;  // empty means "inherit" for per-phase overrides
  std::string doc;
};

class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& keys();

  // Applies `key = value` lines; '#' starts a comment. Errors cite the line.
  void apply_file(const std::filesystem::path& path);
  void apply_text(const std::string& text, const std::string& origin = "<text>");
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  // Every key in declaration order, as a loadable config file.
  std::string dump() const;
  // CRC-32 of dump(), as 8 hex digits.
  std::string digest() const;

  // Named sub-seed ("data", "init", "gan", "fr") derived from `seed`.
  std::uint64_t sub_seed(const std::string& name) const;

  // num_classes > 0 overrides arcface.num_classes = 0 (taken from the data).
  engine::ModelSpecs model_specs(int num_classes = 0) const;
  // Phase options with `<phase>.` overrides applied over the shared `train.` and `loss.` keys.
  engine::PhaseOptions phase_options(engine::Phase phase) const;
  metrics::SsimWindow ssim_window() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fhgan
