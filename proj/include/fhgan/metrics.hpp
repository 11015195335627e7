#pragma once

// Reconstruction quality (PSNR, SSIM on 8-bit RGB) and cosine-threshold face
// verification accuracy.

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fhgan/data.hpp"
#include "fhgan/image_io.hpp"
#include "fhgan/tensor.hpp"

namespace fhgan::metrics {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// 10 log10(255^2 / MSE) over all channels and pixels; kInfinitePsnr when identical.
double psnr(const Image8& reference, const Image8& test);

enum class SsimWindow { gaussian11, uniform8 };

SsimWindow parse_ssim_window(const std::string& name);
std::string to_string(SsimWindow window);

// K1 = 0.01, K2 = 0.03, L = 255; mean over windows, then over the three channels.
// gaussian11: sliding 11x11 window, sigma 1.5, valid positions only.
// uniform8: non-overlapping 8x8 tiles; a partial trailing tile is dropped.
double ssim(const Image8& reference, const Image8& test, SsimWindow window = SsimWindow::gaussian11);

struct ScoredPair {
  double score = 0.0;
  bool same_identity = false;
};

struct VerificationResult {
  double accuracy = 0.0;
  double threshold = 0.0;  // a pair is called genuine when score > threshold
};

// Sweeps -inf, the midpoints between consecutive distinct sorted scores and +inf;
// returns the best accuracy and the lowest threshold reaching it.
VerificationResult verification_accuracy(std::span<const ScoredPair> pairs);

struct ImageScore {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::string label;
  std::string conventions;
  std::vector<ImageScore> images;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::optional<VerificationResult> verification;
  std::size_t num_verification_pairs = 0;

  std::string to_text() const;
};

// Serializes one or more reports; infinite PSNR becomes the string "inf".
std::string reports_to_json(std::span<const MetricReport> reports);
std::string conventions(SsimWindow window);

// Produces a [3,4h,4w] model-range image for one pair.
using SrFn = std::function<Tensor(const data::ImagePair& pair)>;
// Unit embeddings [N,d] for a [N,3,H,W] image batch.
using EmbedFn = std::function<Tensor(const Tensor& images)>;

// Hallucinates every pair, scores 8-bit exports against the 8-bit HR, and when
// `verification` is nonempty, runs the threshold sweep on embeddings of the
// exported SR images (pair indices refer to `pairs`).
MetricReport evaluate_sr(const std::string& label, const SrFn& generator, const EmbedFn& recognizer,
                         std::span<const data::ImagePair> pairs, std::span<const std::string> names,
                         std::span<const data::VerificationPair> verification,
                         SsimWindow window = SsimWindow::gaussian11);

}  // namespace fhgan::metrics
