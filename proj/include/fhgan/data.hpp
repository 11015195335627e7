#pragma once

// Dataset manifests, HR/LR pair construction, seeded batch sampling,
// verification pair lists and the procedural toy face dataset.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fhgan/image_io.hpp"
#include "fhgan/tensor.hpp"

namespace fhgan::data {

inline constexpr int kHrSize = 112;
inline constexpr int kScale = 4;
inline constexpr int kLrSize = kHrSize / kScale;

enum class Split { train, val, test };

Split parse_split(const std::string& token);
std::string to_string(Split split);

struct ManifestRecord {
  std::string image_path;  // relative paths resolve against the manifest's directory
  std::int64_t identity_id = 0;
  Split split = Split::train;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const ManifestRecord& record) const;
  std::vector<ManifestRecord> split(Split which) const;
};

// CSV with the header line `path,identity_id,split`.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records);

struct ImagePair {
  Tensor hr;  // [3,112,112] in [-1,1]
  Tensor lr;  // [3,28,28] in [-1,1]
  std::int64_t identity_id = 0;
};

// Center crop to crop x crop and map to [-1,1].
Tensor prepare_hr(const Image8& image, int crop = kHrSize);

// Bilinear resampling of a [C,H,W] tensor with pixel-center alignment
// (align-corners off); source coordinates are clamped at the borders.
Tensor resize_bilinear(const Tensor& chw, std::int64_t out_h, std::int64_t out_w);
Tensor downsample_bilinear_x4(const Tensor& hr);
// Bilinear enlargement by `factor`, the interpolation baseline.
Tensor upsample_bilinear(const Tensor& lr, int factor = kScale);

ImagePair make_pair(const Image8& image, std::int64_t identity_id);

// Decodes each record once and caches the resulting pair.
class PairCache {
 public:
  explicit PairCache(Manifest manifest) : manifest_(std::move(manifest)) {}
  const ImagePair& get(const ManifestRecord& record);
  const Manifest& manifest() const { return manifest_; }

 private:
  Manifest manifest_;
  std::map<std::string, ImagePair> cache_;
};

// Record indices of a batch. Entries [0, hr_half) and [hr_half, size) come
// from disjoint identity sets.
struct BatchPlan {
  std::vector<std::size_t> indices;
  std::size_t hr_half = 0;
};

BatchPlan plan_training_batch(std::span<const ManifestRecord> records, std::size_t batch_size, std::uint64_t seed);

struct TrainingBatch {
  std::vector<ImagePair> pairs;
  std::size_t hr_half = 0;

  std::size_t size() const { return pairs.size(); }
  Tensor hr() const;  // [N,3,112,112]
  Tensor lr() const;  // [N,3,28,28]
  std::vector<int> labels() const;
};

TrainingBatch sample_training_batch(std::span<const ManifestRecord> records, std::size_t batch_size,
                                    std::uint64_t seed, PairCache& cache);

// Indices into the record list passed to make_verification_pairs.
struct VerificationPair {
  std::size_t a = 0;
  std::size_t b = 0;
  bool same_identity = false;
};

// ceil(n/2) genuine and floor(n/2) impostor pairs.
std::vector<VerificationPair> make_verification_pairs(std::span<const ManifestRecord> records, std::size_t num_pairs,
                                                      std::uint64_t seed);

struct SynthOptions {
  int num_identities = 4;
  int images_per_identity = 3;
  int test_per_identity = 0;  // the last k images of each identity go to the test split
  std::uint64_t seed = 0;
  int image_size = kHrSize;
};

// Writes images/<id>_<k>.png and manifest.csv under out_dir; returns the manifest.
Manifest synth_toy_dataset(const SynthOptions& options, const std::filesystem::path& out_dir);
// The image synth_toy_dataset writes for (identity, index).
Image8 synth_toy_image(const SynthOptions& options, int identity, int index);

}  // namespace fhgan::data
