#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "fhgan/data.hpp"
#include "fhgan/error.hpp"
#include "support.hpp"

using namespace fhgan;
using namespace fhgan::data;
using fhgan::testing::temp_dir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string error_of(const std::filesystem::path& p) {
  try {
    load_manifest(p);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

// Direct bilinear sampler: the value at continuous source position (y, x)
// computed from the four neighbouring pixel centres.
double sample_at(const Tensor& chw, int c, double y, double x) {
  const auto h = chw.dim(1), w = chw.dim(2);
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::int64_t>(std::floor(y)), x0 = static_cast<std::int64_t>(std::floor(x));
  const auto y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  auto v = [&](std::int64_t yy, std::int64_t xx) { return chw[(c * h + yy) * w + xx]; };
  return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
}

Image8 gradient_image(int w, int h) {
  Image8 img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<std::uint8_t>((x + 2 * y + 50 * c) % 256);
  return img;
}

}  // namespace

TEST_CASE("manifest parsing") {
  const auto dir = temp_dir("manifest");
  write_text(dir / "ok.csv", "path,identity_id,split\na.png,0,train\nsub/b.png,3,test\nc.png,3,val\n");
  const auto m = load_manifest(dir / "ok.csv");
  REQUIRE(m.records.size() == 3);
  CHECK(m.records[1] == ManifestRecord{"sub/b.png", 3, Split::test});
  CHECK(m.resolve(m.records[1]) == dir / "sub/b.png");
  CHECK(m.split(Split::train).size() == 1);

  save_manifest(dir / "copy.csv", m.records);
  CHECK(load_manifest(dir / "copy.csv").records == m.records);

  write_text(dir / "dup.csv", "path,identity_id,split\na.png,0,train\na.png,1,train\n");
  CHECK(error_of(dir / "dup.csv").find(":3:") != std::string::npos);
  CHECK(error_of(dir / "dup.csv").find("duplicate") != std::string::npos);
  write_text(dir / "split.csv", "path,identity_id,split\na.png,0,holdout\n");
  CHECK(error_of(dir / "split.csv").find(":2:") != std::string::npos);
  write_text(dir / "neg.csv", "path,identity_id,split\na.png,-1,train\n");
  CHECK_FALSE(error_of(dir / "neg.csv").empty());
  write_text(dir / "short.csv", "path,identity_id,split\na.png,1\n");
  CHECK_FALSE(error_of(dir / "short.csv").empty());
  write_text(dir / "header.csv", "file,id,split\na.png,1,train\n");
  CHECK_FALSE(error_of(dir / "header.csv").empty());
  CHECK_FALSE(error_of(dir / "missing.csv").empty());
  CHECK_THROWS_AS(parse_split("x"), DataError);
}

TEST_CASE("HR preparation crops the centre and maps to [-1,1]") {
  const auto img = gradient_image(128, 130);
  const auto hr = prepare_hr(img);
  CHECK(hr.shape() == Shape{3, 112, 112});
  // Offsets (128-112)/2 = 8 and (130-112)/2 = 9.
  CHECK(hr[(1 * 112 + 0) * 112 + 0] == img.at(9, 8, 1) / 127.5 - 1.0);
  CHECK(hr[(2 * 112 + 111) * 112 + 111] == img.at(120, 119, 2) / 127.5 - 1.0);
  CHECK(prepare_hr(Image8(112, 112, 255))[0] == 1.0);
  CHECK(prepare_hr(Image8(112, 112, 0))[0] == -1.0);
  CHECK_THROWS_AS(prepare_hr(Image8(111, 200)), DataError);

  const auto exact = gradient_image(112, 112);
  CHECK(to_image8(prepare_hr(exact)) == exact);
}

TEST_CASE("bilinear downsampling") {
  const Tensor constant({3, 112, 112}, 0.3);
  const auto small = downsample_bilinear_x4(constant);
  CHECK(small.shape() == Shape{3, 28, 28});
  for (double v : small.values()) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));

  Tensor ramp({3, 112, 112});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 112; ++y)
      for (int x = 0; x < 112; ++x) ramp[(c * 112 + y) * 112 + x] = 0.01 * x - 0.5;
  const auto coarse = downsample_bilinear_x4(ramp);
  // Output x samples source position 4x + 1.5, which stays inside the image.
  for (int x = 0; x < 28; ++x) CHECK(coarse[5 * 28 + x] == doctest::Approx(0.01 * (4 * x + 1.5) - 0.5));

  const auto noise = fhgan::testing::uniform_tensor({3, 112, 112}, 3, -1, 1);
  const auto fast = downsample_bilinear_x4(noise);
  double worst = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 28; ++y)
      for (int x = 0; x < 28; ++x)
        worst = std::max(worst, std::abs(fast[(c * 28 + y) * 28 + x] - sample_at(noise, c, 4 * y + 1.5, 4 * x + 1.5)));
  CHECK(worst < 1e-6);

  const auto up = upsample_bilinear(fhgan::testing::uniform_tensor({3, 7, 5}, 4, -1, 1));
  CHECK(up.shape() == Shape{3, 28, 20});
  CHECK_THROWS_AS(downsample_bilinear_x4(Tensor({3, 10, 12})), ShapeError);
  CHECK_THROWS_AS(downsample_bilinear_x4(Tensor({112, 112})), ShapeError);
}

TEST_CASE("toy dataset is deterministic and learnable") {
  SynthOptions opt;
  opt.num_identities = 4;
  opt.images_per_identity = 3;
  opt.test_per_identity = 1;
  opt.seed = 11;
  const auto a = synth_toy_dataset(opt, temp_dir("toy_a"));
  const auto b = synth_toy_dataset(opt, temp_dir("toy_b"));
  REQUIRE(a.records.size() == 12);
  CHECK(a.records == b.records);
  CHECK(a.split(Split::test).size() == 4);
  std::set<std::int64_t> ids;
  for (const auto& r : a.records) {
    ids.insert(r.identity_id);
    CHECK(read_png(a.resolve(r)) == read_png(b.resolve(r)));
  }
  CHECK(ids.size() == 4);

  // Nearest centroid in pixel space, trained on the train split.
  SynthOptions big = opt;
  big.num_identities = 6;
  big.images_per_identity = 4;
  std::map<int, Tensor> centroid;
  for (int id = 0; id < 6; ++id) {
    Tensor sum({3, 112, 112});
    for (int k = 0; k < 3; ++k) {
      const auto t = to_model_range(synth_toy_image(big, id, k));
      for (std::int64_t i = 0; i < t.size(); ++i) sum[i] += t[i] / 3.0;
    }
    centroid[id] = sum;
  }
  int correct = 0;
  for (int id = 0; id < 6; ++id) {
    const auto t = to_model_range(synth_toy_image(big, id, 3));
    int best = -1;
    double best_d = 1e300;
    for (const auto& [cid, c] : centroid) {
      double d = 0.0;
      for (std::int64_t i = 0; i < t.size(); ++i) d += (t[i] - c[i]) * (t[i] - c[i]);
      if (d < best_d) {
        best_d = d;
        best = cid;
      }
    }
    correct += best == id;
  }
  CHECK(correct > 1);  // chance is 1 of 6
  CHECK_THROWS_AS(synth_toy_dataset(SynthOptions{0, 3, 0, 0}, temp_dir("toy_bad")), ConfigError);
}

TEST_CASE("training batches are deterministic with identity-disjoint halves") {
  std::vector<ManifestRecord> records;
  for (int id = 0; id < 8; ++id)
    for (int k = 0; k < 2; ++k) records.push_back({"img" + std::to_string(id) + "_" + std::to_string(k), id});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = plan_training_batch(records, 4, seed);
    CHECK(p.indices == plan_training_batch(records, 4, seed).indices);
    REQUIRE(p.indices.size() == 4);
    std::set<std::int64_t> first, second;
    for (std::size_t i = 0; i < p.indices.size(); ++i) {
      (i < p.hr_half ? first : second).insert(records[p.indices[i]].identity_id);
    }
    for (auto id : first) CHECK(second.count(id) == 0);
    CHECK(p.hr_half == 2);
  }
  CHECK(plan_training_batch(records, 4, 1).indices != plan_training_batch(records, 4, 2).indices);

  // Two identities still split cleanly.
  std::vector<ManifestRecord> two{{"a", 0}, {"b", 1}, {"c", 1}};
  const auto p = plan_training_batch(two, 3, 5);
  CHECK(p.indices.size() == 3);
  std::set<std::int64_t> first, second;
  for (std::size_t i = 0; i < 3; ++i) (i < p.hr_half ? first : second).insert(two[p.indices[i]].identity_id);
  CHECK(first.size() == 1);
  CHECK(second.size() == 1);
  CHECK(*first.begin() != *second.begin());

  std::vector<ManifestRecord> one{{"a", 0}, {"b", 0}, {"c", 0}};
  CHECK_THROWS_AS(plan_training_batch(one, 2, 0), DataError);
  CHECK_THROWS_AS(plan_training_batch(records, 1, 0), ConfigError);
}

TEST_CASE("sampled pairs derive LR from HR") {
  SynthOptions opt;
  opt.num_identities = 3;
  opt.images_per_identity = 2;
  opt.seed = 4;
  const auto m = synth_toy_dataset(opt, temp_dir("toy_pairs"));
  PairCache cache(m);
  const auto batch = sample_training_batch(m.records, 4, 9, cache);
  CHECK(batch.hr().shape() == Shape{4, 3, 112, 112});
  CHECK(batch.lr().shape() == Shape{4, 3, 28, 28});
  for (const auto& pair : batch.pairs) CHECK(pair.lr == downsample_bilinear_x4(pair.hr));
  const auto again = sample_training_batch(m.records, 4, 9, cache);
  CHECK(again.labels() == batch.labels());
  CHECK(again.hr() == batch.hr());
}

TEST_CASE("verification pairs are balanced and labelled") {
  std::vector<ManifestRecord> records{{"a0", 0}, {"a1", 0}, {"b0", 1}, {"b1", 1}};
  const auto two = make_verification_pairs(records, 2, 1);
  REQUIRE(two.size() == 2);
  int genuine = 0;
  for (const auto& p : two) genuine += p.same_identity;
  CHECK(genuine == 1);

  for (int id = 2; id < 6; ++id) records.push_back({"c" + std::to_string(id), id});
  const auto many = make_verification_pairs(records, 21, 3);
  CHECK(many.size() == 21);
  genuine = 0;
  for (const auto& p : many) {
    CHECK(p.a != p.b);
    CHECK(p.same_identity == (records[p.a].identity_id == records[p.b].identity_id));
    genuine += p.same_identity;
  }
  CHECK(genuine == 11);
  CHECK(make_verification_pairs(records, 21, 3).size() == 21);

  std::vector<ManifestRecord> thin{{"a0", 0}, {"a1", 0}, {"b0", 1}};
  CHECK_THROWS_AS(make_verification_pairs(thin, 2, 0), DataError);
}
