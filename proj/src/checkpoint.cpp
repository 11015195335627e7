#include "fhgan/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

#include "fhgan/error.hpp"

namespace fhgan::engine {

namespace {

constexpr char kMagic[8] = {'F', 'H', 'G', 'A', 'N', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using Value = std::variant<Tensor, std::int64_t, double, std::string>;

class Writer {
 public:
  void tensor(const std::string& name, const Tensor& t) {
    header('T', name);
    pod(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) pod(d);
    bytes(t.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
  }
  void integer(const std::string& name, std::int64_t v) {
    header('I', name);
    pod(v);
  }
  void real(const std::string& name, double v) {
    header('F', name);
    pod(v);
  }
  void text(const std::string& name, const std::string& v) {
    header('S', name);
    pod(static_cast<std::uint32_t>(v.size()));
    bytes(v.data(), v.size());
  }
  void store(const std::string& prefix, const ParamStore& s) {
    for (std::size_t i = 0; i < s.size(); ++i) tensor(prefix + s.names()[i], s.tensors()[i]);
  }
  const std::string& payload() const { return buf_; }

 private:
  template <class T>
  void pod(const T& v) {
    bytes(&v, sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void header(char tag, const std::string& name) {
    buf_.push_back(tag);
    pod(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& payload) {
    std::size_t pos = 0;
    auto take = [&](void* out, std::size_t n) {
      if (payload.size() - pos < n) throw CheckpointError("checkpoint payload is truncated");
      std::memcpy(out, payload.data() + pos, n);
      pos += n;
    };
    auto u32 = [&] {
      std::uint32_t v;
      take(&v, sizeof v);
      return v;
    };
    while (pos < payload.size()) {
      char tag;
      take(&tag, 1);
      std::string name(u32(), '\0');
      take(name.data(), name.size());
      Value value;
      switch (tag) {
        case 'T': {
          Shape shape(u32());
          for (auto& d : shape) take(&d, sizeof d);
          const auto n = numel(shape);
          if (n < 0 || static_cast<std::size_t>(n) > payload.size() / sizeof(double)) {
            throw CheckpointError("checkpoint tensor '" + name + "' has an invalid shape");
          }
          std::vector<double> values(static_cast<std::size_t>(n));
          take(values.data(), values.size() * sizeof(double));
          value = Tensor(std::move(shape), std::move(values));
          break;
        }
        case 'I': {
          std::int64_t v;
          take(&v, sizeof v);
          value = v;
          break;
        }
        case 'F': {
          double v;
          take(&v, sizeof v);
          value = v;
          break;
        }
        case 'S': {
          std::string s(u32(), '\0');
          take(s.data(), s.size());
          value = std::move(s);
          break;
        }
        default:
          throw CheckpointError("checkpoint entry '" + name + "' has unknown tag");
      }
      if (!index_.emplace(name, entries_.size()).second) throw CheckpointError("duplicate checkpoint entry " + name);
      entries_.emplace_back(std::move(name), std::move(value));
    }
  }

  template <class T>
  const T& get(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw CheckpointError("checkpoint lacks entry '" + name + "'");
    const auto* v = std::get_if<T>(&entries_[it->second].second);
    if (!v) throw CheckpointError("checkpoint entry '" + name + "' has the wrong type");
    return *v;
  }
  int i32(const std::string& name) const { return static_cast<int>(get<std::int64_t>(name)); }

  ParamStore store(const std::string& prefix) const {
    ParamStore s;
    for (const auto& [name, value] : entries_) {
      if (name.starts_with(prefix)) s.add(name.substr(prefix.size()), std::get<Tensor>(value));
    }
    return s;
  }

 private:
  std::vector<std::pair<std::string, Value>> entries_;
  std::map<std::string, std::size_t> index_;
};

std::vector<int> to_ints(const Tensor& t) {
  std::vector<int> out;
  for (double v : t.values()) out.push_back(static_cast<int>(v));
  return out;
}

Tensor from_ints(const std::vector<int>& v) {
  return Tensor({static_cast<std::int64_t>(v.size())}, std::vector<double>(v.begin(), v.end()));
}

void expect_layout(const ParamStore& got, const ParamStore& want, const std::string& what) {
  if (got.names() != want.names()) throw CheckpointError(what + " parameters do not match the stored spec");
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got.tensors()[i].shape() != want.tensors()[i].shape()) {
      throw CheckpointError(what + " parameter '" + got.names()[i] + "' has shape " +
                            fhgan::to_string(got.tensors()[i].shape()) + ", spec requires " +
                            fhgan::to_string(want.tensors()[i].shape()));
    }
  }
}

std::uint32_t crc(const std::string& payload) {
  uLong c = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < payload.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(payload.size() - pos, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(payload.data() + pos), n);
    pos += n;
  }
  return static_cast<std::uint32_t>(c);
}

}  // namespace

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path) {
  Writer w;
  const auto& m = bundle.models;
  const auto& g = m.generator.spec;
  w.integer("generator.spec.num_blocks", g.num_blocks);
  w.integer("generator.spec.llfe_channels", g.llfe_channels);
  w.integer("generator.spec.bottleneck_channels", g.bottleneck_channels);
  w.integer("generator.spec.upscale_factor", g.upscale_factor);
  w.integer("generator.spec.upsample_channels", g.upsample_channels);
  w.integer("generator.spec.base", g.base);
  w.integer("generator.spec.block.num_layers", g.block.num_layers);
  w.integer("generator.spec.block.growth_rate", g.block.growth_rate);
  w.integer("generator.spec.block.input_channels", g.block.input_channels);
  w.integer("generator.spec.block.kernel_size", g.block.kernel_size);
  const auto& c = m.critic.spec;
  w.integer("critic.spec.input_channels", c.input_channels);
  w.integer("critic.spec.input_size", c.input_size);
  w.integer("critic.spec.base_channels", c.base_channels);
  w.integer("critic.spec.max_channels", c.max_channels);
  w.integer("critic.spec.num_layers", c.num_layers);
  w.integer("critic.spec.kernel_size", c.kernel_size);
  w.real("critic.spec.leaky_slope", c.leaky_slope);
  const auto& r = m.recognizer.spec;
  w.integer("recognizer.spec.input_size", r.input_size);
  w.integer("recognizer.spec.stem_channels", r.stem_channels);
  w.tensor("recognizer.spec.unit_widths", from_ints(r.unit_widths));
  w.tensor("recognizer.spec.unit_strides", from_ints(r.unit_strides));
  w.integer("recognizer.spec.embedding_dim", r.embedding_dim);
  const auto& a = m.recognizer.arcface;
  w.real("arcface.scale", a.scale);
  w.real("arcface.margin", a.margin);
  w.integer("arcface.num_classes", a.num_classes);
  w.integer("arcface.embedding_dim", a.embedding_dim);

  w.store("generator/", m.generator.store);
  w.store("critic/", m.critic.store);
  w.store("backbone/", m.recognizer.backbone);
  w.store("head/", m.recognizer.head);

  const auto& s = bundle.state;
  w.text("state.phase", to_string(s.phase));
  w.integer("state.iteration", s.iteration);
  w.integer("state.seed", static_cast<std::int64_t>(s.seed));
  w.real("state.lr_generator", s.lr_generator);
  w.real("state.lr_critic", s.lr_critic);
  w.real("state.lr_recognizer", s.lr_recognizer);
  w.integer("opt.generator.step", s.generator_opt.step);
  w.store("opt.generator.m/", s.generator_opt.m);
  w.store("opt.generator.v/", s.generator_opt.v);
  w.integer("opt.critic.step", s.critic_opt.step);
  w.store("opt.critic.m/", s.critic_opt.m);
  w.store("opt.critic.v/", s.critic_opt.v);
  w.store("opt.backbone.velocity/", s.backbone_opt.velocity);
  w.store("opt.head.velocity/", s.head_opt.velocity);
  w.text("config_digest", bundle.config_digest);

  const auto& payload = w.payload();
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t size = payload.size();
  const std::uint32_t digest = crc(payload);

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&size), sizeof size);
    out.write(reinterpret_cast<const char*>(&digest), sizeof digest);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string file = ss.str();

  constexpr std::size_t header = sizeof kMagic + 4 + 8 + 4;
  if (file.size() < header || std::memcmp(file.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint file");
  }
  std::uint32_t version, digest;
  std::uint64_t size;
  std::memcpy(&version, file.data() + 8, 4);
  std::memcpy(&size, file.data() + 12, 8);
  std::memcpy(&digest, file.data() + 20, 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  if (file.size() - header != size) {
    throw CheckpointError(path.string() + ": corrupted checkpoint (payload size " +
                          std::to_string(file.size() - header) + ", header says " + std::to_string(size) + ")");
  }
  const std::string payload = file.substr(header);
  if (crc(payload) != digest) throw CheckpointError(path.string() + ": corrupted checkpoint (digest mismatch)");

  const Reader r(payload);
  ModelSpecs specs;
  auto& g = specs.generator;
  g.num_blocks = r.i32("generator.spec.num_blocks");
  g.llfe_channels = r.i32("generator.spec.llfe_channels");
  g.bottleneck_channels = r.i32("generator.spec.bottleneck_channels");
  g.upscale_factor = r.i32("generator.spec.upscale_factor");
  g.upsample_channels = r.i32("generator.spec.upsample_channels");
  g.base = r.i32("generator.spec.base");
  g.block.num_layers = r.i32("generator.spec.block.num_layers");
  g.block.growth_rate = r.i32("generator.spec.block.growth_rate");
  g.block.input_channels = r.i32("generator.spec.block.input_channels");
  g.block.kernel_size = r.i32("generator.spec.block.kernel_size");
  auto& c = specs.critic;
  c.input_channels = r.i32("critic.spec.input_channels");
  c.input_size = r.i32("critic.spec.input_size");
  c.base_channels = r.i32("critic.spec.base_channels");
  c.max_channels = r.i32("critic.spec.max_channels");
  c.num_layers = r.i32("critic.spec.num_layers");
  c.kernel_size = r.i32("critic.spec.kernel_size");
  c.leaky_slope = r.get<double>("critic.spec.leaky_slope");
  auto& rs = specs.recognizer;
  rs.input_size = r.i32("recognizer.spec.input_size");
  rs.stem_channels = r.i32("recognizer.spec.stem_channels");
  rs.unit_widths = to_ints(r.get<Tensor>("recognizer.spec.unit_widths"));
  rs.unit_strides = to_ints(r.get<Tensor>("recognizer.spec.unit_strides"));
  rs.embedding_dim = r.i32("recognizer.spec.embedding_dim");
  auto& a = specs.arcface;
  a.scale = r.get<double>("arcface.scale");
  a.margin = r.get<double>("arcface.margin");
  a.num_classes = r.i32("arcface.num_classes");
  a.embedding_dim = r.i32("arcface.embedding_dim");

  Models reference;
  try {
    reference = init_models(specs, 0);
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": stored spec is invalid: " + e.what());
  }

  CheckpointBundle bundle;
  auto& m = bundle.models;
  m.generator = {g, r.store("generator/")};
  m.critic = {c, r.store("critic/")};
  m.recognizer = {rs, a, r.store("backbone/"), r.store("head/")};
  expect_layout(m.generator.store, reference.generator.store, "generator");
  expect_layout(m.critic.store, reference.critic.store, "critic");
  expect_layout(m.recognizer.backbone, reference.recognizer.backbone, "recognizer");
  expect_layout(m.recognizer.head, reference.recognizer.head, "class weight");

  auto& s = bundle.state;
  try {
    s.phase = parse_phase(r.get<std::string>("state.phase"));
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  s.iteration = r.get<std::int64_t>("state.iteration");
  s.seed = static_cast<std::uint64_t>(r.get<std::int64_t>("state.seed"));
  s.lr_generator = r.get<double>("state.lr_generator");
  s.lr_critic = r.get<double>("state.lr_critic");
  s.lr_recognizer = r.get<double>("state.lr_recognizer");
  s.generator_opt = {r.store("opt.generator.m/"), r.store("opt.generator.v/"), r.get<std::int64_t>("opt.generator.step")};
  s.critic_opt = {r.store("opt.critic.m/"), r.store("opt.critic.v/"), r.get<std::int64_t>("opt.critic.step")};
  s.backbone_opt = {r.store("opt.backbone.velocity/")};
  s.head_opt = {r.store("opt.head.velocity/")};
  expect_layout(s.generator_opt.m, m.generator.store, "generator optimizer");
  expect_layout(s.generator_opt.v, m.generator.store, "generator optimizer");
  expect_layout(s.critic_opt.m, m.critic.store, "critic optimizer");
  expect_layout(s.critic_opt.v, m.critic.store, "critic optimizer");
  expect_layout(s.backbone_opt.velocity, m.recognizer.backbone, "recognizer optimizer");
  expect_layout(s.head_opt.velocity, m.recognizer.head, "class weight optimizer");
  bundle.config_digest = r.get<std::string>("config_digest");
  return bundle;
}

}  // namespace fhgan::engine
