#include "fhgan/config.hpp"

#include <zlib.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "fhgan/error.hpp"

namespace fhgan {

namespace {

using enum ValueType;

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k = {
      {"seed", integer, "0", "root seed; data/init/gan/fr sub-seeds derive from it"},
      {"data.manifest", text, "", "manifest CSV (path,identity_id,split)"},
      {"out", text, "run", "output directory"},

      {"generator.num_blocks", integer, "6", "sparse blocks B"},
      {"generator.num_layers", integer, "6", "layers per block L"},
      {"generator.growth_rate", integer, "32", "growth rate g"},
      {"generator.kernel_size", integer, "3", "block kernel size (odd)"},
      {"generator.base", integer, "2", "aggregation base c"},
      {"generator.llfe_channels", integer, "64", "low-level feature channels"},
      {"generator.bottleneck_channels", integer, "128", "channels after the 1x1 bottleneck"},
      {"generator.upscale", integer, "4", "upscale factor r"},
      {"generator.upsample_channels", integer, "16", "channels after pixel shuffle C_u"},

      {"critic.base_channels", integer, "64", "first critic convolution width"},
      {"critic.max_channels", integer, "512", "critic width cap"},
      {"critic.num_layers", integer, "5", "stride-2 critic convolutions"},
      {"critic.leaky_slope", real, "0.2", "critic leaky activation slope"},

      {"recognizer.stem_channels", integer, "16", "recognizer stem width"},
      {"recognizer.unit_widths", int_list, "16,32,64,64", "residual unit widths"},
      {"recognizer.unit_strides", int_list, "1,2,2,2", "residual unit strides"},
      {"recognizer.embedding_dim", integer, "512", "embedding dimension d"},

      {"arcface.scale", real, "64", "feature scale s"},
      {"arcface.margin", real, "0.5", "additive angular margin m (radians)"},
      {"arcface.num_classes", integer, "0", "identity classes; 0 derives max identity_id + 1 from the manifest"},

      {"loss.pixel", real, "1", "lambda1, pixel loss weight"},
      {"loss.perceptual", real, "0.05", "lambda2, perceptual loss weight"},
      {"loss.adversarial", real, "0.001", "lambda3, adversarial loss weight"},
      {"loss.identity", real, "0.01", "lambda4, identity loss weight"},
      {"loss.extractor", text, "random_conv", "perceptual feature extractor: random_conv or identity"},

      {"train.batch_size", integer, "8", "mini-batch size"},
      {"train.steps", integer, "0", "steps per phase; 0 runs the phase schedule to its end"},
      {"train.lr", real, "0", "constant learning rate; 0 uses the phase schedule"},
      {"train.n_critic", integer, "1", "critic updates per generator update"},
      {"train.lambda_gp", real, "10", "gradient penalty coefficient"},
      {"train.checkpoint_every", integer, "0", "steps between periodic checkpoints; 0 saves only at the end"},

      {"eval.split", text, "test", "manifest split evaluated by evaluate and verify"},
      {"eval.ssim_window", text, "gaussian11", "gaussian11 or uniform8"},
      {"eval.verification_pairs", integer, "0", "verification pairs; 0 uses one per image"},
      {"eval.generator", text, "model", "model, bilinear or oracle (returns the HR image)"},

      {"hallucinate.grid", boolean, "true", "also write LR-upscaled | SR | HR comparison grids"},
  };
  for (const char* phase : {"fr_pretrain", "gan_pretrain", "joint"}) {
    const std::string p = phase;
    k.push_back({p + ".steps", integer, "", "overrides train.steps for " + p});
    k.push_back({p + ".lr", real, "", "overrides train.lr for " + p});
    k.push_back({p + ".batch_size", integer, "", "overrides train.batch_size for " + p});
    k.push_back({p + ".n_critic", integer, "", "overrides train.n_critic for " + p});
    k.push_back({p + ".lambda_gp", real, "", "overrides train.lambda_gp for " + p});
    for (const char* term : {"pixel", "perceptual", "adversarial", "identity"}) {
      k.push_back({p + ".loss." + term, real, "", std::string("overrides loss.") + term + " for " + p});
    }
  }
  return k;
}

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : RunConfig::keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<int>(parse_int(key, trim(item))));
  return out;
}

void check_type(const ConfigKey& k, const std::string& v) {
  if (v.empty()) {
    if (k.default_value.empty()) return;
    if (k.type != text) throw ConfigError(k.name + ": empty value");
  }
  switch (k.type) {
    case integer:
      parse_int(k.name, v);
      break;
    case real:
      parse_real(k.name, v);
      break;
    case boolean:
      parse_bool(k.name, v);
      break;
    case int_list:
      parse_int_list(k.name, v);
      break;
    case text:
      break;
  }
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::keys() {
  static const std::vector<ConfigKey> table = build_keys();
  return table;
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  check_type(*k, value);
  values_[key] = value;
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const { return parse_real(key, get(key)); }
std::int64_t RunConfig::get_int(const std::string& key) const { return parse_int(key, get(key)); }
bool RunConfig::get_bool(const std::string& key) const { return parse_bool(key, get(key)); }
std::vector<int> RunConfig::get_int_list(const std::string& key) const { return parse_int_list(key, get(key)); }

std::string RunConfig::dump() const {
  std::ostringstream os;
  for (const auto& k : keys()) os << k.name << " = " << values_.at(k.name) << "\n";
  return os.str();
}

std::string RunConfig::digest() const {
  const auto text = dump();
  const auto c = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(c));
  return buf;
}

std::uint64_t RunConfig::sub_seed(const std::string& name) const {
  const auto seed = static_cast<std::uint64_t>(get_int("seed"));
  std::vector<std::uint32_t> material{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (unsigned char ch : name) material.push_back(ch);
  std::seed_seq seq(material.begin(), material.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

engine::ModelSpecs RunConfig::model_specs(int num_classes) const {
  engine::ModelSpecs s;
  auto& g = s.generator;
  g.num_blocks = static_cast<int>(get_int("generator.num_blocks"));
  g.block.num_layers = static_cast<int>(get_int("generator.num_layers"));
  g.block.growth_rate = static_cast<int>(get_int("generator.growth_rate"));
  g.block.kernel_size = static_cast<int>(get_int("generator.kernel_size"));
  g.base = static_cast<int>(get_int("generator.base"));
  g.llfe_channels = static_cast<int>(get_int("generator.llfe_channels"));
  g.block.input_channels = g.llfe_channels;
  g.bottleneck_channels = static_cast<int>(get_int("generator.bottleneck_channels"));
  g.upscale_factor = static_cast<int>(get_int("generator.upscale"));
  g.upsample_channels = static_cast<int>(get_int("generator.upsample_channels"));
  g.validate();

  auto& c = s.critic;
  c.base_channels = static_cast<int>(get_int("critic.base_channels"));
  c.max_channels = static_cast<int>(get_int("critic.max_channels"));
  c.num_layers = static_cast<int>(get_int("critic.num_layers"));
  c.leaky_slope = get_double("critic.leaky_slope");
  c.input_size = data::kHrSize;
  c.validate();

  auto& r = s.recognizer;
  r.stem_channels = static_cast<int>(get_int("recognizer.stem_channels"));
  r.unit_widths = get_int_list("recognizer.unit_widths");
  r.unit_strides = get_int_list("recognizer.unit_strides");
  r.embedding_dim = static_cast<int>(get_int("recognizer.embedding_dim"));
  r.input_size = data::kHrSize;
  r.validate();

  auto& a = s.arcface;
  a.scale = get_double("arcface.scale");
  a.margin = get_double("arcface.margin");
  const auto configured = get_int("arcface.num_classes");
  a.num_classes = configured > 0 ? static_cast<int>(configured) : num_classes;
  a.embedding_dim = r.embedding_dim;
  if (a.num_classes < 1) throw ConfigError("arcface.num_classes is 0 and no dataset supplied a class count");
  a.validate();
  return s;
}

engine::PhaseOptions RunConfig::phase_options(engine::Phase phase) const {
  const auto p = engine::to_string(phase) + ".";
  auto pick = [&](const std::string& local, const std::string& shared) {
    return get(p + local).empty() ? shared : p + local;
  };
  engine::PhaseOptions o;
  o.phase = phase;
  o.steps = get_int(pick("steps", "train.steps"));
  o.lr = get_double(pick("lr", "train.lr"));
  o.batch_size = static_cast<std::size_t>(get_int(pick("batch_size", "train.batch_size")));
  o.n_critic = static_cast<int>(get_int(pick("n_critic", "train.n_critic")));
  o.lambda_gp = get_double(pick("lambda_gp", "train.lambda_gp"));
  o.weights.pixel = get_double(pick("loss.pixel", "loss.pixel"));
  o.weights.perceptual = get_double(pick("loss.perceptual", "loss.perceptual"));
  o.weights.adversarial = get_double(pick("loss.adversarial", "loss.adversarial"));
  o.weights.identity = get_double(pick("loss.identity", "loss.identity"));
  if (get_int("train.batch_size") < 0 || get_int(pick("batch_size", "train.batch_size")) < 0) {
    throw ConfigError("batch_size must be positive");
  }
  o.validate();
  return o;
}

metrics::SsimWindow RunConfig::ssim_window() const { return metrics::parse_ssim_window(get("eval.ssim_window")); }

}  // namespace fhgan
