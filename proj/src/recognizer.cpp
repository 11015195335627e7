#include "fhgan/recognizer.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "fhgan/error.hpp"

namespace fhgan::recognizer {

namespace {

constexpr double kPreluInit = 0.25;
constexpr double kUnitNormTolerance = 1e-6;

std::string unit_name(std::size_t i) { return "unit" + std::to_string(i + 1); }

bool needs_projection(int in_c, int out_c, int stride) { return stride != 1 || in_c != out_c; }

void add_conv(ParamStore& store, const std::string& prefix, int in_c, int out_c, int k, std::mt19937_64& rng) {
  store.add(prefix + ".weight",
            init_kernel({out_c, in_c, k, k}, static_cast<std::int64_t>(in_c) * k * k, kPreluInit, rng));
  store.add(prefix + ".bias", Tensor({out_c}));
}

ag::Var conv(const Bindings& p, const std::string& prefix, const ag::Var& x, int stride) {
  const auto& w = p[prefix + ".weight"];
  return ag::add_channel_bias(ag::conv2d(x, w, stride, static_cast<int>(w.dim(2) / 2)), p[prefix + ".bias"]);
}

Tensor one_hot(std::span<const int> labels, std::int64_t rows, std::int64_t classes) {
  if (static_cast<std::int64_t>(labels.size()) != rows) {
    throw ShapeError("arcface: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                     " embeddings");
  }
  Tensor t({rows, classes});
  for (std::int64_t i = 0; i < rows; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) {
      throw ConfigError("identity label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
    }
    t[i * classes + y] = 1.0;
  }
  return t;
}

}  // namespace

void RecognizerSpec::validate() const {
  if (input_size < 1 || stem_channels < 1 || embedding_dim < 1) throw ConfigError("recognizer sizes must be positive");
  if (unit_widths.empty() || unit_widths.size() != unit_strides.size()) {
    throw ConfigError("recognizer needs matching, non-empty unit widths and strides");
  }
  for (std::size_t i = 0; i < unit_widths.size(); ++i) {
    if (unit_widths[i] < 1 || unit_strides[i] < 1) throw ConfigError("recognizer unit sizes must be positive");
  }
}

void ArcFaceConfig::validate() const {
  if (!(scale > 0.0)) throw ConfigError("arcface scale must be positive");
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) throw ConfigError("arcface margin must lie in [0, pi/2)");
  if (num_classes < 1 || embedding_dim < 1) throw ConfigError("arcface class count and dimension must be positive");
}

RecognizerParams init_recognizer(const RecognizerSpec& spec, const ArcFaceConfig& arcface, std::uint64_t seed) {
  spec.validate();
  arcface.validate();
  if (arcface.embedding_dim != spec.embedding_dim) throw ConfigError("arcface and backbone embedding sizes differ");
  std::mt19937_64 rng(seed);
  RecognizerParams out{spec, arcface, {}, {}};
  add_conv(out.backbone, "stem", 3, spec.stem_channels, 3, rng);
  out.backbone.add("stem.prelu", Tensor({1}, kPreluInit));
  int in_c = spec.stem_channels;
  for (std::size_t i = 0; i < spec.unit_widths.size(); ++i) {
    const int c = spec.unit_widths[i];
    const auto name = unit_name(i);
    add_conv(out.backbone, name + ".conv1", in_c, c, 3, rng);
    out.backbone.add(name + ".prelu1", Tensor({1}, kPreluInit));
    add_conv(out.backbone, name + ".conv2", c, c, 3, rng);
    if (needs_projection(in_c, c, spec.unit_strides[i])) add_conv(out.backbone, name + ".shortcut", in_c, c, 1, rng);
    out.backbone.add(name + ".prelu2", Tensor({1}, kPreluInit));
    in_c = c;
  }
  out.backbone.add("fc.weight", init_kernel({in_c, spec.embedding_dim}, in_c, 1.0, rng));
  out.backbone.add("fc.bias", Tensor({spec.embedding_dim}));

  Tensor weights({arcface.embedding_dim, arcface.num_classes});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : weights.values()) v = normal(rng);
  for (int j = 0; j < arcface.num_classes; ++j) {
    double norm = 0.0;
    for (int d = 0; d < arcface.embedding_dim; ++d) norm += weights[d * arcface.num_classes + j] * weights[d * arcface.num_classes + j];
    norm = std::sqrt(norm);
    for (int d = 0; d < arcface.embedding_dim; ++d) weights[d * arcface.num_classes + j] /= norm;
  }
  out.head.add("class_weights", std::move(weights));
  return out;
}

ag::Var l2_normalize_rows(const ag::Var& x) {
  if (x.value().rank() != 2) throw ShapeError("l2_normalize_rows expects a matrix, got " + to_string(x.shape()));
  ag::Var norms = ag::sqrt(ag::sum_per_sample(ag::square(x)));
  for (double n : norms.value().values()) {
    if (!(n > 1e-12)) throw TrainingFault("degenerate embedding: zero-norm feature vector");
  }
  return ag::mul(x, ag::expand_per_sample(ag::reciprocal(norms), x.shape()));
}

ag::Var embed(const RecognizerSpec& spec, const Bindings& p, const ag::Var& images) {
  if (images.value().rank() != 4 || images.dim(1) != 3) {
    throw ShapeError("recognizer expects [N,3,H,W], got " + to_string(images.shape()));
  }
  ag::Var x = ag::prelu(conv(p, "stem", images, 2), p["stem.prelu"]);
  int in_c = spec.stem_channels;
  for (std::size_t i = 0; i < spec.unit_widths.size(); ++i) {
    const auto name = unit_name(i);
    const int stride = spec.unit_strides[i];
    const int c = spec.unit_widths[i];
    ag::Var h = ag::prelu(conv(p, name + ".conv1", x, stride), p[name + ".prelu1"]);
    h = conv(p, name + ".conv2", h, 1);
    ag::Var shortcut = needs_projection(in_c, c, stride) ? conv(p, name + ".shortcut", x, stride) : x;
    x = ag::prelu(ag::add(h, shortcut), p[name + ".prelu2"]);
    in_c = c;
  }
  const double area = static_cast<double>(x.dim(2) * x.dim(3));
  ag::Var pooled = ag::scale(ag::spatial_sum(x), 1.0 / area);
  ag::Var features = ag::add_channel_bias(ag::matmul(pooled, p["fc.weight"]), p["fc.bias"]);
  return l2_normalize_rows(features);
}

Tensor embed_images(const RecognizerParams& params, const Tensor& images) {
  ag::NoGradGuard no_grad;
  Bindings bound(params.backbone, false);
  return embed(params.spec, bound, ag::constant(images)).value();
}

ag::Var arcface_logits(const ag::Var& embeddings, std::span<const int> labels, const ag::Var& class_weights,
                       const ArcFaceConfig& cfg) {
  cfg.validate();
  if (embeddings.value().rank() != 2 || class_weights.value().rank() != 2 ||
      embeddings.dim(1) != class_weights.dim(0)) {
    throw ShapeError("arcface: embeddings " + to_string(embeddings.shape()) + " vs class weights " +
                     to_string(class_weights.shape()));
  }
  const auto rows = embeddings.dim(0);
  const auto classes = class_weights.dim(1);
  const auto d = embeddings.dim(1);
  for (std::int64_t i = 0; i < rows; ++i) {
    double norm = 0.0;
    for (std::int64_t k = 0; k < d; ++k) norm += embeddings.value()[i * d + k] * embeddings.value()[i * d + k];
    if (std::abs(std::sqrt(norm) - 1.0) > kUnitNormTolerance) {
      throw ConfigError("arcface: embedding row " + std::to_string(i) + " is not unit norm");
    }
  }
  const Tensor target = one_hot(labels, rows, classes);

  ag::Var unit_weights = ag::transpose(l2_normalize_rows(ag::transpose(class_weights)));
  ag::Var cosines = ag::matmul(embeddings, unit_weights);
  ag::Var cos_target = ag::sum_per_sample(ag::mul_const(cosines, target));
  ag::Var sin_target = ag::sqrt(ag::clamp(ag::sub(ag::constant(Tensor(cos_target.shape(), 1.0)), ag::square(cos_target)),
                                          1e-12, 1.0));
  ag::Var with_margin = ag::sub(ag::scale(cos_target, std::cos(cfg.margin)), ag::scale(sin_target, std::sin(cfg.margin)));

  // Past theta = pi - m, cos(theta + m) turns back up; use the linear fallback there.
  const double threshold = std::cos(std::numbers::pi - cfg.margin);
  Tensor fallback(cos_target.shape()), regular(cos_target.shape());
  for (std::int64_t i = 0; i < rows; ++i) {
    const bool past = cos_target.value()[i] <= threshold;
    fallback[i] = past ? 1.0 : 0.0;
    regular[i] = past ? 0.0 : 1.0;
  }
  ag::Var phi = ag::add(ag::mul_const(with_margin, regular),
                        ag::mul_const(ag::add_scalar(cos_target, -cfg.margin * std::sin(cfg.margin)), fallback));
  ag::Var shift = ag::mul_const(ag::expand_per_sample(ag::sub(phi, cos_target), cosines.shape()), target);
  return ag::scale(ag::add(cosines, shift), cfg.scale);
}

ag::Var arcface_loss(const ag::Var& embeddings, std::span<const int> labels, const ag::Var& class_weights,
                     const ArcFaceConfig& cfg) {
  ag::Var logits = arcface_logits(embeddings, labels, class_weights, cfg);
  const auto rows = logits.dim(0), classes = logits.dim(1);
  if (rows == 0) throw ShapeError("arcface: empty batch");
  Tensor row_max({rows, classes});
  for (std::int64_t i = 0; i < rows; ++i) {
    double m = logits.value()[i * classes];
    for (std::int64_t j = 1; j < classes; ++j) m = std::max(m, logits.value()[i * classes + j]);
    for (std::int64_t j = 0; j < classes; ++j) row_max[i * classes + j] = m;
  }
  ag::Var shifted = ag::sub(logits, ag::constant(row_max));
  ag::Var log_sum = ag::log(ag::sum_per_sample(ag::exp(shifted)));
  ag::Var target_shifted = ag::sum_per_sample(ag::mul_const(shifted, one_hot(labels, rows, classes)));
  return ag::mean(ag::sub(log_sum, target_shifted));
}

ag::Var fr_batch_loss(const RecognizerSpec& spec, const Bindings& backbone, const ag::Var& class_weights,
                      const ag::Var& hr_batch, const ag::Var& sr_batch, std::span<const int> labels_hr,
                      std::span<const int> labels_sr, const ArcFaceConfig& cfg) {
  if (hr_batch.value().rank() != 4 || sr_batch.value().rank() != 4) throw ShapeError("fr_batch_loss: expected NCHW");
  Shape a = hr_batch.shape(), b = sr_batch.shape();
  a[0] = b[0] = 0;
  if (a != b) throw ShapeError("fr_batch_loss: HR and SR image shapes differ");
  if (static_cast<std::int64_t>(labels_hr.size()) != hr_batch.dim(0) ||
      static_cast<std::int64_t>(labels_sr.size()) != sr_batch.dim(0)) {
    throw ShapeError("fr_batch_loss: label count does not match batch");
  }
  for (std::size_t i = 0; i < std::min(labels_hr.size(), labels_sr.size()); ++i) {
    if (labels_hr[i] == labels_sr[i]) {
      throw DataError("fr_batch_loss: pairing violation, identity " + std::to_string(labels_hr[i]) +
                      " appears in both halves at position " + std::to_string(i));
    }
  }
  const ag::Var parts[] = {hr_batch, sr_batch};
  ag::Var embeddings = embed(spec, backbone, ag::concat(parts, 0));
  std::vector<int> labels(labels_hr.begin(), labels_hr.end());
  labels.insert(labels.end(), labels_sr.begin(), labels_sr.end());
  return arcface_loss(embeddings, labels, class_weights, cfg);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0 && nb > 0.0)) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::vector<int> nearest_class(const Tensor& embeddings, const Tensor& class_weights) {
  const auto n = embeddings.dim(0), d = embeddings.dim(1), k = class_weights.dim(1);
  if (class_weights.dim(0) != d) throw ShapeError("nearest_class: dimension mismatch");
  std::vector<int> out;
  for (std::int64_t i = 0; i < n; ++i) {
    int best = 0;
    double best_cos = -2.0;
    for (std::int64_t j = 0; j < k; ++j) {
      double dot = 0.0, norm = 0.0;
      for (std::int64_t q = 0; q < d; ++q) {
        dot += embeddings[i * d + q] * class_weights[q * k + j];
        norm += class_weights[q * k + j] * class_weights[q * k + j];
      }
      const double c = dot / std::sqrt(norm);
      if (c > best_cos) {
        best_cos = c;
        best = static_cast<int>(j);
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace fhgan::recognizer
