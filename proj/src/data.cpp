#include "fhgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "fhgan/error.hpp"

namespace fhgan::data {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Record indices grouped by identity, in ascending identity order.
std::map<std::int64_t, std::vector<std::size_t>> group_by_identity(std::span<const ManifestRecord> records) {
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].identity_id].push_back(i);
  return groups;
}

// `count` draws from pool: without replacement while possible, then cycling a reshuffled pool.
std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  while (out.size() < count) {
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t i = 0; i < pool.size() && out.size() < count; ++i) out.push_back(pool[i]);
  }
  return out;
}

struct Rgb {
  double r, g, b;
};

Rgb random_color(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

// Fixed geometric and textural layout of one toy identity.
struct FaceTraits {
  Rgb background, skin, hair_a, hair_b, iris, mouth, mark_a, mark_b;
  double cx, cy, rx, ry;
  double hair_line, stripe_period, stripe_angle;
  double eye_dx, eye_y, eye_r;
  double mouth_y, mouth_w, mouth_h;
  double mark_x, mark_y, mark_cell;
};

FaceTraits make_traits(std::uint64_t seed, int identity, int size) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(identity), 0x7a11u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = size / 112.0;
  FaceTraits t{};
  t.background = random_color(rng, 20, 120);
  t.skin = random_color(rng, 140, 230);
  t.hair_a = random_color(rng, 10, 90);
  t.hair_b = random_color(rng, 90, 200);
  t.iris = random_color(rng, 0, 160);
  t.mouth = random_color(rng, 60, 200);
  t.mark_a = random_color(rng, 0, 255);
  t.mark_b = random_color(rng, 0, 255);
  t.cx = s * (56 + 6 * (u(rng) - 0.5));
  t.cy = s * (60 + 6 * (u(rng) - 0.5));
  t.rx = s * (32 + 8 * u(rng));
  t.ry = s * (40 + 8 * u(rng));
  t.hair_line = t.cy - t.ry * (0.35 + 0.25 * u(rng));
  t.stripe_period = s * (3.0 + 5.0 * u(rng));
  t.stripe_angle = std::numbers::pi * u(rng);
  t.eye_dx = s * (11 + 8 * u(rng));
  t.eye_y = t.cy - s * (4 + 8 * u(rng));
  t.eye_r = s * (4 + 4 * u(rng));
  t.mouth_y = t.cy + s * (14 + 10 * u(rng));
  t.mouth_w = s * (8 + 10 * u(rng));
  t.mouth_h = s * (3 + 5 * u(rng));
  t.mark_x = t.cx + (u(rng) < 0.5 ? -1 : 1) * s * (12 + 8 * u(rng));
  t.mark_y = t.cy + s * (2 + 8 * u(rng));
  t.mark_cell = s * (2.0 + std::floor(3.0 * u(rng)));
  return t;
}

Rgb shade(const FaceTraits& t, double x, double y) {
  const double fx = (x - t.cx) / t.rx, fy = (y - t.cy) / t.ry;
  Rgb c = t.background;
  c.r += 0.2 * y;
  if (fx * fx + fy * fy <= 1.0) {
    c = t.skin;
    if (y < t.hair_line) {
      const double phase = (x * std::cos(t.stripe_angle) + y * std::sin(t.stripe_angle)) / t.stripe_period;
      c = std::sin(2 * std::numbers::pi * phase) > 0 ? t.hair_a : t.hair_b;
    }
  }
  for (double side : {-1.0, 1.0}) {
    const double ex = x - (t.cx + side * t.eye_dx), ey = y - t.eye_y;
    const double d2 = ex * ex + ey * ey;
    if (d2 <= t.eye_r * t.eye_r) c = d2 <= 0.3 * t.eye_r * t.eye_r ? t.iris : Rgb{240, 240, 240};
  }
  const double mx = (x - t.cx) / t.mouth_w, my = (y - t.mouth_y) / t.mouth_h;
  if (y >= t.mouth_y && std::abs(mx * mx + my * my - 1.0) < 0.35) c = t.mouth;
  const double half = 3 * t.mark_cell;
  if (std::abs(x - t.mark_x) < half && std::abs(y - t.mark_y) < half) {
    const auto ix = static_cast<long>(std::floor((x - t.mark_x + half) / t.mark_cell));
    const auto iy = static_cast<long>(std::floor((y - t.mark_y + half) / t.mark_cell));
    c = ((ix + iy) % 2 == 0) ? t.mark_a : t.mark_b;
  }
  return c;
}

}  // namespace

Split parse_split(const std::string& token) {
  if (token == "train") return Split::train;
  if (token == "val") return Split::val;
  if (token == "test") return Split::test;
  throw DataError("unknown split '" + token + "'");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

std::filesystem::path Manifest::resolve(const ManifestRecord& record) const {
  std::filesystem::path p(record.image_path);
  return p.is_absolute() ? p : root / p;
}

std::vector<ManifestRecord> Manifest::split(Split which) const {
  std::vector<ManifestRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [which](const ManifestRecord& r) { return r.split == which; });
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest manifest{path.parent_path(), {}};
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,identity_id,split") {
    throw DataError(path.string() + ":1: expected header 'path,identity_id,split'");
  }
  std::set<std::string> seen;
  for (int line_no = 2; std::getline(in, line); ++line_no) {
    if (trim(line).empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto fields = split_csv(line);
    if (fields.size() != 3 || fields[0].empty()) throw DataError(where + "expected 'path,identity_id,split'");
    ManifestRecord record;
    record.image_path = fields[0];
    try {
      std::size_t used = 0;
      record.identity_id = std::stoll(fields[1], &used);
      if (used != fields[1].size() || record.identity_id < 0) throw std::invalid_argument("id");
    } catch (const std::exception&) {
      throw DataError(where + "identity_id must be a non-negative integer, got '" + fields[1] + "'");
    }
    try {
      record.split = parse_split(fields[2]);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (!seen.insert(record.image_path).second) throw DataError(where + "duplicate path '" + record.image_path + "'");
    manifest.records.push_back(std::move(record));
  }
  return manifest;
}

void save_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "path,identity_id,split\n";
  for (const auto& r : records) out << r.image_path << ',' << r.identity_id << ',' << to_string(r.split) << '\n';
  if (!out) throw DataError("failed writing manifest " + path.string());
}

Tensor prepare_hr(const Image8& image, int crop) {
  if (image.width < crop || image.height < crop) {
    throw DataError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                    " is smaller than the " + std::to_string(crop) + "px crop");
  }
  const int x0 = (image.width - crop) / 2, y0 = (image.height - crop) / 2;
  Image8 cropped(crop, crop);
  for (int y = 0; y < crop; ++y)
    for (int x = 0; x < crop; ++x)
      for (int c = 0; c < 3; ++c) cropped.at(y, x, c) = image.at(y0 + y, x0 + x, c);
  return to_model_range(cropped);
}

Tensor resize_bilinear(const Tensor& chw, std::int64_t out_h, std::int64_t out_w) {
  if (chw.rank() != 3) throw ShapeError("resize_bilinear expects [C,H,W], got " + fhgan::to_string(chw.shape()));
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: empty output");
  const auto channels = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  struct Tap {
    std::int64_t i0, i1;
    double frac;
  };
  auto taps = [](std::int64_t in, std::int64_t out) {
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t o = 0; o < out; ++o) {
      const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * ratio - 0.5);
      const auto i0 = std::min(static_cast<std::int64_t>(src), in - 1);
      t[static_cast<std::size_t>(o)] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(h, out_h), tx = taps(w, out_w);
  Tensor out({channels, out_h, out_w});
  for (std::int64_t c = 0; c < channels; ++c) {
    const double* src = chw.data() + c * h * w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const auto& a = ty[static_cast<std::size_t>(y)];
      for (std::int64_t x = 0; x < out_w; ++x) {
        const auto& b = tx[static_cast<std::size_t>(x)];
        const double top = src[a.i0 * w + b.i0] * (1 - b.frac) + src[a.i0 * w + b.i1] * b.frac;
        const double bottom = src[a.i1 * w + b.i0] * (1 - b.frac) + src[a.i1 * w + b.i1] * b.frac;
        out[(c * out_h + y) * out_w + x] = top * (1 - a.frac) + bottom * a.frac;
      }
    }
  }
  return out;
}

Tensor downsample_bilinear_x4(const Tensor& hr) {
  if (hr.rank() != 3) throw ShapeError("downsample expects [C,H,W], got " + fhgan::to_string(hr.shape()));
  if (hr.dim(1) % kScale != 0 || hr.dim(2) % kScale != 0) {
    throw ShapeError("downsample: spatial size " + fhgan::to_string(hr.shape()) + " not divisible by 4");
  }
  return resize_bilinear(hr, hr.dim(1) / kScale, hr.dim(2) / kScale);
}

Tensor upsample_bilinear(const Tensor& lr, int factor) {
  if (lr.rank() != 3) throw ShapeError("upsample expects [C,H,W], got " + fhgan::to_string(lr.shape()));
  return resize_bilinear(lr, lr.dim(1) * factor, lr.dim(2) * factor);
}

ImagePair make_pair(const Image8& image, std::int64_t identity_id) {
  ImagePair pair;
  pair.hr = prepare_hr(image);
  pair.lr = downsample_bilinear_x4(pair.hr);
  pair.identity_id = identity_id;
  return pair;
}

const ImagePair& PairCache::get(const ManifestRecord& record) {
  auto it = cache_.find(record.image_path);
  if (it != cache_.end()) return it->second;
  auto pair = make_pair(read_png(manifest_.resolve(record)), record.identity_id);
  return cache_.emplace(record.image_path, std::move(pair)).first->second;
}

BatchPlan plan_training_batch(std::span<const ManifestRecord> records, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 2) throw ConfigError("training batches need at least 2 samples");
  if (records.size() < batch_size) {
    throw DataError("batch of " + std::to_string(batch_size) + " requested from " + std::to_string(records.size()) +
                    " records");
  }
  const auto groups = group_by_identity(records);
  if (groups.size() < 2) throw DataError("identity-disjoint batch halves need at least 2 identities");

  std::mt19937_64 rng(seed);
  std::vector<std::int64_t> ids;
  for (const auto& [id, _] : groups) ids.push_back(id);
  std::shuffle(ids.begin(), ids.end(), rng);

  BatchPlan plan;
  plan.hr_half = (batch_size + 1) / 2;
  std::vector<std::size_t> pool_a, pool_b;
  std::size_t taken = 0;
  for (; taken + 1 < ids.size() && pool_a.size() < plan.hr_half; ++taken) {
    const auto& g = groups.at(ids[taken]);
    pool_a.insert(pool_a.end(), g.begin(), g.end());
  }
  for (std::size_t i = taken; i < ids.size(); ++i) {
    const auto& g = groups.at(ids[i]);
    pool_b.insert(pool_b.end(), g.begin(), g.end());
  }
  plan.indices = draw(std::move(pool_a), plan.hr_half, rng);
  const auto second = draw(std::move(pool_b), batch_size - plan.hr_half, rng);
  plan.indices.insert(plan.indices.end(), second.begin(), second.end());
  return plan;
}

Tensor TrainingBatch::hr() const {
  std::vector<Tensor> items;
  for (const auto& p : pairs) items.push_back(p.hr);
  return stack(items);
}

Tensor TrainingBatch::lr() const {
  std::vector<Tensor> items;
  for (const auto& p : pairs) items.push_back(p.lr);
  return stack(items);
}

std::vector<int> TrainingBatch::labels() const {
  std::vector<int> out;
  for (const auto& p : pairs) out.push_back(static_cast<int>(p.identity_id));
  return out;
}

TrainingBatch sample_training_batch(std::span<const ManifestRecord> records, std::size_t batch_size,
                                    std::uint64_t seed, PairCache& cache) {
  const auto plan = plan_training_batch(records, batch_size, seed);
  TrainingBatch batch;
  batch.hr_half = plan.hr_half;
  for (auto i : plan.indices) batch.pairs.push_back(cache.get(records[i]));
  return batch;
}

std::vector<VerificationPair> make_verification_pairs(std::span<const ManifestRecord> records, std::size_t num_pairs,
                                                      std::uint64_t seed) {
  const auto groups = group_by_identity(records);
  std::vector<const std::vector<std::size_t>*> all, multi;
  for (const auto& [_, g] : groups) {
    all.push_back(&g);
    if (g.size() >= 2) multi.push_back(&g);
  }
  if (multi.size() < 2) throw DataError("verification pairs need at least 2 identities with 2 or more images each");
  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  std::vector<VerificationPair> out;
  const std::size_t genuine = num_pairs - num_pairs / 2;
  for (std::size_t i = 0; i < genuine; ++i) {
    const auto& g = *multi[pick(multi.size())];
    const auto a = pick(g.size());
    auto b = pick(g.size() - 1);
    if (b >= a) ++b;
    out.push_back({g[a], g[b], true});
  }
  for (std::size_t i = genuine; i < num_pairs; ++i) {
    const auto ga = pick(all.size());
    auto gb = pick(all.size() - 1);
    if (gb >= ga) ++gb;
    out.push_back({(*all[ga])[pick(all[ga]->size())], (*all[gb])[pick(all[gb]->size())], false});
  }
  return out;
}

Image8 synth_toy_image(const SynthOptions& options, int identity, int index) {
  const int size = options.image_size;
  const auto traits = make_traits(options.seed, identity, size);
  std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                    static_cast<std::uint32_t>(identity), static_cast<std::uint32_t>(index), 0x1a6eu};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<int> shift(-2, 2);
  const double dx = shift(rng), dy = shift(rng);
  const double gain = std::uniform_real_distribution<double>(0.92, 1.08)(rng);
  std::normal_distribution<double> noise(0.0, 3.0);

  Image8 image(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      Rgb acc{0, 0, 0};
      for (double sy : {0.25, 0.75}) {
        for (double sx : {0.25, 0.75}) {
          const Rgb c = shade(traits, x + sx - dx, y + sy - dy);
          acc.r += c.r / 4;
          acc.g += c.g / 4;
          acc.b += c.b / 4;
        }
      }
      const double channel[3] = {acc.r, acc.g, acc.b};
      for (int c = 0; c < 3; ++c) {
        image.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::round(channel[c] * gain + noise(rng)), 0.0, 255.0));
      }
    }
  }
  return image;
}

Manifest synth_toy_dataset(const SynthOptions& options, const std::filesystem::path& out_dir) {
  if (options.num_identities < 1 || options.images_per_identity < 1) {
    throw ConfigError("toy dataset needs positive identity and image counts");
  }
  if (options.test_per_identity < 0 || options.test_per_identity > options.images_per_identity) {
    throw ConfigError("test_per_identity must lie in [0, images_per_identity]");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "images").string() + ": " + ec.message());
  Manifest manifest{out_dir, {}};
  for (int id = 0; id < options.num_identities; ++id) {
    for (int k = 0; k < options.images_per_identity; ++k) {
      char name[64];
      std::snprintf(name, sizeof(name), "images/id%03d_%02d.png", id, k);
      write_png(out_dir / name, synth_toy_image(options, id, k));
      const bool test = k >= options.images_per_identity - options.test_per_identity;
      manifest.records.push_back({name, id, test ? Split::test : Split::train});
    }
  }
  save_manifest(out_dir / "manifest.csv", manifest.records);
  return manifest;
}

}  // namespace fhgan::data
