#include "fhgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fhgan/error.hpp"
#include "fhgan/recognizer.hpp"

namespace fhgan::metrics {

namespace {

void check_same_size(const Image8& a, const Image8& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError(std::string(what) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) +
                     ")");
  }
}

struct Window {
  int size;
  int step;
  std::vector<double> weights;  // size x size, summing to 1
};

Window make_window(SsimWindow kind) {
  if (kind == SsimWindow::uniform8) return {8, 8, std::vector<double>(64, 1.0 / 64.0)};
  Window w{11, 1, std::vector<double>(121)};
  double total = 0.0;
  for (int y = 0; y < 11; ++y) {
    for (int x = 0; x < 11; ++x) {
      const double dy = y - 5, dx = x - 5;
      total += w.weights[static_cast<std::size_t>(y * 11 + x)] = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
    }
  }
  for (auto& v : w.weights) v /= total;
  return w;
}

double channel_ssim(const Image8& a, const Image8& b, int c, const Window& win) {
  constexpr double c1 = (0.01 * 255) * (0.01 * 255);
  constexpr double c2 = (0.03 * 255) * (0.03 * 255);
  double sum = 0.0;
  std::int64_t count = 0;
  for (int y0 = 0; y0 + win.size <= a.height; y0 += win.step) {
    for (int x0 = 0; x0 + win.size <= a.width; x0 += win.step) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int y = 0; y < win.size; ++y) {
        for (int x = 0; x < win.size; ++x) {
          const double w = win.weights[static_cast<std::size_t>(y * win.size + x)];
          const double u = a.at(y0 + y, x0 + x, c), v = b.at(y0 + y, x0 + x, c);
          mx += w * u;
          my += w * v;
          sxx += w * u * u;
          syy += w * v * v;
          sxy += w * u * v;
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

std::string format_psnr(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

nlohmann::ordered_json psnr_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

}  // namespace

double psnr(const Image8& reference, const Image8& test) {
  check_same_size(reference, test, "psnr");
  if (reference.rgb.empty()) throw ShapeError("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < reference.rgb.size(); ++i) {
    const double d = static_cast<double>(reference.rgb[i]) - static_cast<double>(test.rgb[i]);
    se += d * d;
  }
  if (se == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(255.0 * 255.0 / (se / static_cast<double>(reference.rgb.size())));
}

SsimWindow parse_ssim_window(const std::string& name) {
  if (name == "gaussian11") return SsimWindow::gaussian11;
  if (name == "uniform8") return SsimWindow::uniform8;
  throw ConfigError("unknown SSIM window '" + name + "' (expected gaussian11 or uniform8)");
}

std::string to_string(SsimWindow window) {
  return window == SsimWindow::uniform8 ? "uniform8" : "gaussian11";
}

double ssim(const Image8& reference, const Image8& test, SsimWindow window) {
  check_same_size(reference, test, "ssim");
  const auto win = make_window(window);
  if (reference.width < win.size || reference.height < win.size) {
    throw ShapeError("ssim: image smaller than the " + std::to_string(win.size) + "x" + std::to_string(win.size) +
                     " window");
  }
  double total = 0.0;
  for (int c = 0; c < 3; ++c) total += channel_ssim(reference, test, c, win);
  return total / 3.0;
}

VerificationResult verification_accuracy(std::span<const ScoredPair> pairs) {
  const auto genuine = std::count_if(pairs.begin(), pairs.end(), [](const ScoredPair& p) { return p.same_identity; });
  const auto n = static_cast<std::int64_t>(pairs.size());
  if (genuine == 0 || genuine == n) throw ConfigError("verification needs both genuine and impostor pairs");

  std::vector<ScoredPair> sorted(pairs.begin(), pairs.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const ScoredPair& a, const ScoredPair& b) { return a.score < b.score; });

  // At threshold t, pairs with score <= t are called impostors.
  // Start at -inf: every pair is called genuine.
  std::int64_t correct = genuine;
  VerificationResult best{static_cast<double>(correct) / static_cast<double>(n),
                          -std::numeric_limits<double>::infinity()};
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      correct += sorted[j].same_identity ? -1 : 1;
      ++j;
    }
    const double t = j < sorted.size() ? 0.5 * (sorted[i].score + sorted[j].score)
                                       : std::numeric_limits<double>::infinity();
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    if (acc > best.accuracy) best = {acc, t};
    i = j;
  }
  return best;
}

std::string conventions(SsimWindow window) {
  return "8-bit RGB exports; PSNR and SSIM averaged over R, G, B; SSIM window " + to_string(window) +
         " (K1=0.01, K2=0.03, L=255); verification by cosine similarity, genuine when score > threshold";
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << "== " << label << " ==\n";
  os << "conventions: " << conventions << "\n";
  for (const auto& s : images) {
    os << "  " << s.name << "  psnr " << format_psnr(s.psnr) << "  ssim " << std::fixed << std::setprecision(6)
       << s.ssim << "\n";
  }
  os << "images: " << images.size() << "\n";
  os << "mean psnr: " << format_psnr(mean_psnr) << " dB\n";
  os << "mean ssim: " << std::fixed << std::setprecision(6) << mean_ssim << "\n";
  if (verification) {
    os << "verification: accuracy " << std::setprecision(4) << verification->accuracy << " at threshold "
       << std::setprecision(6) << verification->threshold << " over " << num_verification_pairs << " pairs\n";
  }
  return os.str();
}

std::string reports_to_json(std::span<const MetricReport> reports) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["label"] = r.label;
    j["conventions"] = r.conventions;
    auto images = nlohmann::ordered_json::array();
    for (const auto& s : r.images) {
      images.push_back({{"name", s.name}, {"psnr", psnr_json(s.psnr)}, {"ssim", s.ssim}});
    }
    j["images"] = images;
    nlohmann::ordered_json summary;
    summary["count"] = r.images.size();
    summary["mean_psnr"] = psnr_json(r.mean_psnr);
    summary["mean_ssim"] = r.mean_ssim;
    if (r.verification) {
      summary["verification_accuracy"] = r.verification->accuracy;
      summary["verification_threshold"] = std::isinf(r.verification->threshold)
                                              ? nlohmann::ordered_json(r.verification->threshold > 0 ? "inf" : "-inf")
                                              : nlohmann::ordered_json(r.verification->threshold);
      summary["verification_pairs"] = r.num_verification_pairs;
    }
    j["summary"] = summary;
    out.push_back(j);
  }
  return out.dump(2);
}

MetricReport evaluate_sr(const std::string& label, const SrFn& generator, const EmbedFn& recognizer,
                         std::span<const data::ImagePair> pairs, std::span<const std::string> names,
                         std::span<const data::VerificationPair> verification, SsimWindow window) {
  if (pairs.empty()) throw DataError("evaluate_sr: no images to evaluate");
  if (names.size() != pairs.size()) throw ConfigError("evaluate_sr: one name per pair is required");
  MetricReport report;
  report.label = label;
  report.conventions = conventions(window);
  std::vector<Tensor> exported;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Tensor sr = generator(pairs[i]);
    if (sr.shape() != pairs[i].hr.shape()) {
      throw ShapeError("evaluate_sr: output " + fhgan::to_string(sr.shape()) + " does not match HR " +
                       fhgan::to_string(pairs[i].hr.shape()));
    }
    const auto hr8 = to_image8(pairs[i].hr), sr8 = to_image8(sr);
    report.images.push_back({names[i], psnr(hr8, sr8), ssim(hr8, sr8, window)});
    report.mean_psnr += report.images.back().psnr;
    report.mean_ssim += report.images.back().ssim;
    if (!verification.empty()) exported.push_back(to_model_range(sr8));
  }
  report.mean_psnr /= static_cast<double>(pairs.size());
  report.mean_ssim /= static_cast<double>(pairs.size());

  if (!verification.empty()) {
    const auto emb = recognizer(stack(exported));
    const auto d = emb.dim(1);
    std::vector<ScoredPair> scored;
    for (const auto& vp : verification) {
      if (vp.a >= pairs.size() || vp.b >= pairs.size()) throw ConfigError("evaluate_sr: verification index out of range");
      const std::span<const double> all = emb.values();
      scored.push_back({recognizer::cosine_similarity(all.subspan(vp.a * d, d), all.subspan(vp.b * d, d)),
                        vp.same_identity});
    }
    report.verification = verification_accuracy(scored);
    report.num_verification_pairs = scored.size();
  }
  return report;
}

}  // namespace fhgan::metrics
