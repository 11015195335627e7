#pragma once

// Optimizers, learning-rate schedules and the training steps of the three
// phases: recognizer pretraining, GAN pretraining and joint training.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fhgan/critic.hpp"
#include "fhgan/data.hpp"
#include "fhgan/generator.hpp"
#include "fhgan/losses.hpp"
#include "fhgan/recognizer.hpp"

namespace fhgan::engine {

enum class Phase { fr_pretrain, gan_pretrain, joint };

Phase parse_phase(const std::string& name);
std::string to_string(Phase phase);

// Step-decay schedule. `milestones` are counted in iterations or epochs (per phase).
struct ScheduleRule {
  double base_lr = 1e-3;
  std::vector<std::int64_t> milestones;
  double factor = 0.1;
  std::int64_t end = 0;
  bool per_epoch = false;
};

ScheduleRule schedule_rule(Phase phase);
// Rate in effect at `t` (iteration or epoch, whichever the phase counts).
double lr_schedule(Phase phase, std::int64_t t);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ParamStore m;
  ParamStore v;
  std::int64_t step = 0;

  static AdamState for_params(const ParamStore& params);
};

void adam_update(ParamStore& params, const ParamStore& grads, AdamState& state, double lr,
                 const AdamConfig& cfg = {});

struct SgdState {
  ParamStore velocity;

  static SgdState for_params(const ParamStore& params);
};

// v = momentum * v + g; p -= lr * v.
void sgd_update(ParamStore& params, const ParamStore& grads, SgdState& state, double lr, double momentum = 0.9);

struct ModelSpecs {
  topology::NetworkSpec generator;
  critic::CriticSpec critic;
  recognizer::RecognizerSpec recognizer;
  recognizer::ArcFaceConfig arcface;
};

struct Models {
  generator::GeneratorParams generator;
  critic::CriticParams critic;
  recognizer::RecognizerParams recognizer;

  ModelSpecs specs() const;
};

Models init_models(const ModelSpecs& specs, std::uint64_t seed);

struct TrainState {
  Phase phase = Phase::gan_pretrain;
  std::int64_t iteration = 0;  // completed steps of the current phase
  std::uint64_t seed = 0;      // root of every per-step random stream
  AdamState generator_opt;
  AdamState critic_opt;
  SgdState backbone_opt;
  SgdState head_opt;
  double lr_generator = 0.0;
  double lr_critic = 0.0;
  double lr_recognizer = 0.0;

  static TrainState fresh(const Models& models, Phase phase, std::uint64_t seed);
};

// Independent 64-bit seed for (iteration, stream) under a root seed.
std::uint64_t step_seed(std::uint64_t seed, std::int64_t iteration, std::uint32_t stream);

enum Stream : std::uint32_t { batch_stream = 1, epsilon_stream = 2 };

using CriticBuilder = std::function<ag::Var(const Bindings& params, const ag::Var& images)>;

// One Adam update of `params` on the gradient-penalized critic loss. Returns the loss.
double critic_update(ParamStore& params, AdamState& opt, const CriticBuilder& critic, const Tensor& hr,
                     const Tensor& sr, std::span<const double> epsilons, double lambda_gp, double lr,
                     const AdamConfig& cfg = {});

struct CriticStepResult {
  double loss = 0.0;
  double penalty = 0.0;
};

// Critic update against a fixed SR batch; one epsilon per sample drawn from eps_seed.
CriticStepResult critic_step(Models& models, TrainState& state, const Tensor& hr, const Tensor& sr, double lambda_gp,
                             std::uint64_t eps_seed);

struct GeneratorStepResult {
  losses::LossBreakdown breakdown;
  Tensor sr;  // generator output before the update
};

// Adam update of the generator on the weighted total. Critic and recognizer are frozen;
// components with zero weight are evaluated for logging only.
GeneratorStepResult generator_step(Models& models, TrainState& state, const Tensor& hr, const Tensor& lr,
                                   const losses::LossWeights& weights, const losses::FeatureExtractor& phi);

// Momentum-SGD update of backbone and class weights on the non-paired batch loss.
double fr_step(Models& models, TrainState& state, const Tensor& hr_half, const Tensor& sr_half,
               std::span<const int> labels_hr, std::span<const int> labels_sr);

struct PhaseOptions {
  Phase phase = Phase::gan_pretrain;
  std::int64_t steps = 0;  // 0 runs to the schedule's end
  std::size_t batch_size = 8;
  losses::LossWeights weights{};
  int n_critic = 1;
  double lambda_gp = 10.0;
  double lr = 0.0;  // > 0 replaces the schedule with this constant rate

  void validate() const;
};

struct StepLog {
  Phase phase = Phase::gan_pretrain;
  std::int64_t iteration = 0;  // 1-based index of the finished step
  std::int64_t epoch = 0;
  double lr = 0.0;
  std::vector<double> critic_losses;
  std::vector<double> penalties;
  std::optional<losses::LossBreakdown> generator;
  std::optional<double> fr_loss;

  // Single-line JSON record.
  std::string to_json() const;
};

// n_critic critic steps, one generator step, one recognizer step on the generator's SR output.
StepLog joint_step(Models& models, TrainState& state, const data::TrainingBatch& batch, const PhaseOptions& options,
                   const losses::FeatureExtractor& phi);

// Batches per epoch for a training split of `num_records`.
std::int64_t steps_per_epoch(std::size_t num_records, std::size_t batch_size);
// Total steps the phase runs for.
std::int64_t phase_length(const PhaseOptions& options, std::size_t num_records);

// Drives one phase from state.iteration up to phase_length, sampling batch i from
// step_seed(state.seed, i, batch_stream). `on_step` sees every finished step and may
// save checkpoints; returning false stops early.
void run_phase(Models& models, TrainState& state, const PhaseOptions& options,
               std::span<const data::ManifestRecord> records, data::PairCache& cache,
               const losses::FeatureExtractor& phi, const std::function<bool(const StepLog&)>& on_step);

// Single step of the phase on a given batch (used by run_phase).
StepLog train_step(Models& models, TrainState& state, const data::TrainingBatch& batch, const PhaseOptions& options,
                   const losses::FeatureExtractor& phi, std::int64_t epoch);

}  // namespace fhgan::engine
