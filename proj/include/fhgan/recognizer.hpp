#pragma once

// Face recognizer: a small residual embedding backbone and the additive
// angular margin classification loss.

#include <cstdint>
#include <span>
#include <vector>

#include "fhgan/autograd.hpp"
#include "fhgan/params.hpp"

namespace fhgan::recognizer {

struct RecognizerSpec {
  int input_size = 112;
  int stem_channels = 16;
  std::vector<int> unit_widths{16, 32, 64, 64};
  std::vector<int> unit_strides{1, 2, 2, 2};
  int embedding_dim = 512;

  void validate() const;
};

struct ArcFaceConfig {
  double scale = 64.0;
  double margin = 0.5;  // radians
  int num_classes = 2;
  int embedding_dim = 512;

  void validate() const;
};

struct RecognizerParams {
  RecognizerSpec spec;
  ArcFaceConfig arcface;
  ParamStore backbone;
  ParamStore head;  // "class_weights": [embedding_dim, num_classes], one column per class
};

// Backbone kernels use fan-in scaling; class weight columns are random unit vectors.
RecognizerParams init_recognizer(const RecognizerSpec& spec, const ArcFaceConfig& arcface, std::uint64_t seed);

// L2-normalized embeddings [N, d]. Throws TrainingFault on a zero-norm feature.
ag::Var embed(const RecognizerSpec& spec, const Bindings& backbone, const ag::Var& images);
Tensor embed_images(const RecognizerParams& params, const Tensor& images);

// Rows of x divided by their Euclidean norms.
ag::Var l2_normalize_rows(const ag::Var& x);

// Scaled logits s*cos(theta_j), with the target entry replaced by s*cos(theta_y + m)
// (or the monotone fallback cos(theta) - m sin(m) once theta + m passes pi).
ag::Var arcface_logits(const ag::Var& embeddings, std::span<const int> labels, const ag::Var& class_weights,
                       const ArcFaceConfig& cfg);

// Mean additive-angular-margin softmax loss. Embeddings must be unit rows;
// class weight columns are normalized here.
ag::Var arcface_loss(const ag::Var& embeddings, std::span<const int> labels, const ag::Var& class_weights,
                     const ArcFaceConfig& cfg);

// Loss over the concatenation of an HR batch and an identity-disjoint SR batch.
// Throws DataError when the same identity occupies a paired position in both halves.
ag::Var fr_batch_loss(const RecognizerSpec& spec, const Bindings& backbone, const ag::Var& class_weights,
                      const ag::Var& hr_batch, const ag::Var& sr_batch, std::span<const int> labels_hr,
                      std::span<const int> labels_sr, const ArcFaceConfig& cfg);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Index of the class weight with the highest cosine for each embedding row.
std::vector<int> nearest_class(const Tensor& embeddings, const Tensor& class_weights);

}  // namespace fhgan::recognizer
