#include "fhgan/engine.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "fhgan/error.hpp"

namespace fhgan::engine {

namespace {

void require_finite(double value, const std::string& what, std::int64_t iteration) {
  if (!std::isfinite(value)) {
    throw TrainingFault(what + " is non-finite (" + std::to_string(value) + ") at iteration " +
                        std::to_string(iteration + 1));
  }
}

void require_finite(const ParamStore& grads, const std::string& what, std::int64_t iteration) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads.tensors()[i].all_finite()) {
      throw TrainingFault(what + " gradient of '" + grads.names()[i] + "' is non-finite at iteration " +
                          std::to_string(iteration + 1));
    }
  }
}

void check_same_layout(const ParamStore& a, const ParamStore& b, const char* what) {
  if (a.names() != b.names()) throw ShapeError(std::string(what) + ": parameter names differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.tensors()[i].shape() != b.tensors()[i].shape()) {
      throw ShapeError(std::string(what) + ": shape mismatch for '" + a.names()[i] + "'");
    }
  }
}

Tensor rows(const Tensor& batch, std::int64_t start, std::int64_t count) {
  Shape shape = batch.shape();
  const auto stride = numel(shape) / shape[0];
  shape[0] = count;
  std::vector<double> values(batch.data() + start * stride, batch.data() + (start + count) * stride);
  return Tensor(std::move(shape), std::move(values));
}

critic::CriticFn bind_critic(const critic::CriticSpec& spec, const Bindings& params) {
  return [&spec, &params](const ag::Var& x) { return critic::critic_forward(spec, params, x); };
}

}  // namespace

Phase parse_phase(const std::string& name) {
  if (name == "fr_pretrain") return Phase::fr_pretrain;
  if (name == "gan_pretrain") return Phase::gan_pretrain;
  if (name == "joint") return Phase::joint;
  throw ConfigError("unknown phase '" + name + "' (expected fr_pretrain, gan_pretrain or joint)");
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::fr_pretrain:
      return "fr_pretrain";
    case Phase::gan_pretrain:
      return "gan_pretrain";
    case Phase::joint:
      return "joint";
  }
  return "gan_pretrain";
}

ScheduleRule schedule_rule(Phase phase) {
  switch (phase) {
    case Phase::fr_pretrain:
      return {1e-2, {15, 18}, 0.1, 20, true};
    case Phase::gan_pretrain:
      return {1e-3, {30000, 45000}, 0.1, 56000, false};
    case Phase::joint:
      return {1e-4, {}, 0.1, 4, true};
  }
  return {};
}

double lr_schedule(Phase phase, std::int64_t t) {
  const auto rule = schedule_rule(phase);
  double lr = rule.base_lr;
  for (auto m : rule.milestones) {
    if (t >= m) lr *= rule.factor;
  }
  return lr;
}

AdamState AdamState::for_params(const ParamStore& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_update(ParamStore& params, const ParamStore& grads, AdamState& state, double lr, const AdamConfig& cfg) {
  check_same_layout(params, grads, "adam_update");
  check_same_layout(params, state.m, "adam_update");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.tensors()[i].values();
    const auto g = grads.tensors()[i].values();
    auto m = state.m.tensors()[i].values();
    auto v = state.v.tensors()[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.epsilon);
    }
  }
}

SgdState SgdState::for_params(const ParamStore& params) { return {params.zeros_like()}; }

void sgd_update(ParamStore& params, const ParamStore& grads, SgdState& state, double lr, double momentum) {
  check_same_layout(params, grads, "sgd_update");
  check_same_layout(params, state.velocity, "sgd_update");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.tensors()[i].values();
    const auto g = grads.tensors()[i].values();
    auto v = state.velocity.tensors()[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = momentum * v[k] + g[k];
      p[k] -= lr * v[k];
    }
  }
}

ModelSpecs Models::specs() const {
  return {generator.spec, critic.spec, recognizer.spec, recognizer.arcface};
}

Models init_models(const ModelSpecs& specs, std::uint64_t seed) {
  return {generator::init_generator(specs.generator, step_seed(seed, 0, 11)),
          critic::init_critic(specs.critic, step_seed(seed, 0, 12)),
          recognizer::init_recognizer(specs.recognizer, specs.arcface, step_seed(seed, 0, 13))};
}

TrainState TrainState::fresh(const Models& models, Phase phase, std::uint64_t seed) {
  TrainState state;
  state.phase = phase;
  state.seed = seed;
  state.generator_opt = AdamState::for_params(models.generator.store);
  state.critic_opt = AdamState::for_params(models.critic.store);
  state.backbone_opt = SgdState::for_params(models.recognizer.backbone);
  state.head_opt = SgdState::for_params(models.recognizer.head);
  return state;
}

std::uint64_t step_seed(std::uint64_t seed, std::int64_t iteration, std::uint32_t stream) {
  const auto it = static_cast<std::uint64_t>(iteration);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(it), static_cast<std::uint32_t>(it >> 32), stream};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double critic_update(ParamStore& params, AdamState& opt, const CriticBuilder& critic, const Tensor& hr,
                     const Tensor& sr, std::span<const double> epsilons, double lambda_gp, double lr,
                     const AdamConfig& cfg) {
  Bindings bound(params, true);
  const critic::CriticFn fn = [&](const ag::Var& x) { return critic(bound, x); };
  const auto interpolated = critic::interpolate_batch(hr, sr, epsilons);
  const auto penalty = critic::gradient_penalty(fn, interpolated, lambda_gp);
  const auto loss = critic::critic_loss(fn, ag::constant(hr), ag::constant(sr), penalty);
  const double value = ag::value_of(loss);
  require_finite(value, "critic loss", opt.step);
  const auto grads = gradients(loss, bound);
  require_finite(grads, "critic", opt.step);
  adam_update(params, grads, opt, lr, cfg);
  return value;
}

CriticStepResult critic_step(Models& models, TrainState& state, const Tensor& hr, const Tensor& sr, double lambda_gp,
                             std::uint64_t eps_seed) {
  std::mt19937_64 rng(eps_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> eps(static_cast<std::size_t>(hr.dim(0)));
  for (auto& e : eps) e = u(rng);

  CriticStepResult result;
  const auto& spec = models.critic.spec;
  const CriticBuilder builder = [&](const Bindings& params, const ag::Var& x) {
    return critic::critic_forward(spec, params, x);
  };
  {
    ag::NoGradGuard no_grad;
    Bindings frozen(models.critic.store, false);
    const auto interpolated = critic::interpolate_batch(hr, sr, eps);
    result.penalty = ag::value_of(critic::gradient_penalty(bind_critic(spec, frozen), interpolated, lambda_gp));
  }
  result.loss = critic_update(models.critic.store, state.critic_opt, builder, hr, sr, eps, lambda_gp,
                              state.lr_critic);
  return result;
}

GeneratorStepResult generator_step(Models& models, TrainState& state, const Tensor& hr, const Tensor& lr,
                                   const losses::LossWeights& weights, const losses::FeatureExtractor& phi) {
  weights.validate();
  Bindings gen(models.generator.store, true);
  Bindings critic_params(models.critic.store, false);
  Bindings backbone(models.recognizer.backbone, false);
  const auto critic_fn = bind_critic(models.critic.spec, critic_params);
  const losses::EmbedFn embed_fn = [&](const ag::Var& x) {
    return recognizer::embed(models.recognizer.spec, backbone, x);
  };

  const ag::Var sr = generator::generator_forward(models.generator.spec, gen, ag::Var(lr));
  const ag::Var hr_v = ag::constant(hr);

  // Active terms are built on the graph; zero-weight ones are evaluated detached for the log.
  std::vector<ag::Var> terms;
  auto component = [&](double weight, const std::function<ag::Var(const ag::Var&)>& f) {
    if (weight > 0.0) {
      const auto v = f(sr);
      terms.push_back(ag::scale(v, weight));
      return ag::value_of(v);
    }
    ag::NoGradGuard no_grad;
    return ag::value_of(f(ag::constant(sr.value())));
  };
  const double p = component(weights.pixel, [&](const ag::Var& s) { return losses::pixel_loss(hr_v, s); });
  const double q =
      component(weights.perceptual, [&](const ag::Var& s) { return losses::perceptual_loss(phi, hr_v, s); });
  const double a =
      component(weights.adversarial, [&](const ag::Var& s) { return losses::adversarial_g_term(critic_fn, s); });
  const double i = component(weights.identity, [&](const ag::Var& s) {
    return losses::identity_loss(embed_fn, hr_v, s);
  });

  GeneratorStepResult result{losses::total_loss(p, q, a, i, weights), sr.value()};
  require_finite(result.breakdown.total, "generator loss", state.generator_opt.step);
  if (terms.empty()) return result;

  ag::Var total = terms[0];
  for (std::size_t k = 1; k < terms.size(); ++k) total = ag::add(total, terms[k]);
  const auto grads = gradients(total, gen);
  require_finite(grads, "generator", state.generator_opt.step);
  adam_update(models.generator.store, grads, state.generator_opt, state.lr_generator);
  return result;
}

double fr_step(Models& models, TrainState& state, const Tensor& hr_half, const Tensor& sr_half,
               std::span<const int> labels_hr, std::span<const int> labels_sr) {
  auto& rec = models.recognizer;
  Bindings backbone(rec.backbone, true);
  Bindings head(rec.head, true);
  const auto loss = recognizer::fr_batch_loss(rec.spec, backbone, head["class_weights"], ag::constant(hr_half),
                                              ag::constant(sr_half), labels_hr, labels_sr, rec.arcface);
  const double value = ag::value_of(loss);
  require_finite(value, "recognizer loss", state.iteration);

  std::vector<ag::Var> wrt(backbone.vars().begin(), backbone.vars().end());
  wrt.push_back(head["class_weights"]);
  const auto g = ag::grad(loss, wrt);
  const auto backbone_grads = to_store(backbone, std::span<const ag::Var>(g).first(backbone.vars().size()));
  const auto head_grads = to_store(head, std::span<const ag::Var>(g).last(1));
  require_finite(backbone_grads, "recognizer", state.iteration);
  require_finite(head_grads, "class weight", state.iteration);
  sgd_update(rec.backbone, backbone_grads, state.backbone_opt, state.lr_recognizer);
  sgd_update(rec.head, head_grads, state.head_opt, state.lr_recognizer);
  return value;
}

void PhaseOptions::validate() const {
  weights.validate();
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (n_critic < 0) throw ConfigError("n_critic must be non-negative");
  if (!(lambda_gp >= 0.0) || !std::isfinite(lambda_gp)) throw ConfigError("lambda_gp must be finite and >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (steps < 0) throw ConfigError("steps must be non-negative");
}

std::string StepLog::to_json() const {
  nlohmann::ordered_json j;
  j["phase"] = to_string(phase);
  j["step"] = iteration;
  j["epoch"] = epoch;
  j["lr"] = lr;
  if (!critic_losses.empty()) {
    j["critic"] = critic_losses;
    j["penalty"] = penalties;
  }
  if (generator) {
    j["pixel"] = generator->pixel;
    j["perceptual"] = generator->perceptual;
    j["adversarial"] = generator->adversarial;
    j["identity"] = generator->identity;
    j["total"] = generator->total;
  }
  if (fr_loss) j["fr"] = *fr_loss;
  return j.dump();
}

namespace {

void run_critic_steps(Models& models, TrainState& state, const Tensor& hr, const Tensor& lr_images,
                      const PhaseOptions& options, StepLog& log) {
  if (options.n_critic == 0 || options.weights.adversarial == 0.0) return;
  const auto sr = generator::generate(models.generator, lr_images);
  for (int k = 0; k < options.n_critic; ++k) {
    const auto seed = step_seed(state.seed, state.iteration, epsilon_stream + 16u * static_cast<std::uint32_t>(k));
    const auto r = critic_step(models, state, hr, sr, options.lambda_gp, seed);
    log.critic_losses.push_back(r.loss);
    log.penalties.push_back(r.penalty);
  }
}

}  // namespace

StepLog joint_step(Models& models, TrainState& state, const data::TrainingBatch& batch, const PhaseOptions& options,
                   const losses::FeatureExtractor& phi) {
  StepLog log;
  log.phase = Phase::joint;
  const auto hr = batch.hr(), lr_images = batch.lr();
  run_critic_steps(models, state, hr, lr_images, options, log);
  auto g = generator_step(models, state, hr, lr_images, options.weights, phi);
  log.generator = g.breakdown;

  const auto labels = batch.labels();
  const auto half = static_cast<std::int64_t>(batch.hr_half);
  const auto n = static_cast<std::int64_t>(batch.size());
  const std::span<const int> all(labels);
  log.fr_loss = fr_step(models, state, rows(hr, 0, half), rows(g.sr, half, n - half), all.first(batch.hr_half),
                        all.subspan(batch.hr_half));
  return log;
}

std::int64_t steps_per_epoch(std::size_t num_records, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  return static_cast<std::int64_t>((num_records + batch_size - 1) / batch_size);
}

std::int64_t phase_length(const PhaseOptions& options, std::size_t num_records) {
  if (options.steps > 0) return options.steps;
  const auto rule = schedule_rule(options.phase);
  return rule.per_epoch ? rule.end * steps_per_epoch(num_records, options.batch_size) : rule.end;
}

StepLog train_step(Models& models, TrainState& state, const data::TrainingBatch& batch, const PhaseOptions& options,
                   const losses::FeatureExtractor& phi, std::int64_t epoch) {
  const auto rule = schedule_rule(options.phase);
  const double lr = options.lr > 0.0 ? options.lr : lr_schedule(options.phase, rule.per_epoch ? epoch : state.iteration);
  state.lr_generator = state.lr_critic = state.lr_recognizer = lr;

  StepLog log;
  switch (options.phase) {
    case Phase::fr_pretrain: {
      const auto hr = batch.hr();
      const auto labels = batch.labels();
      const auto half = static_cast<std::int64_t>(batch.hr_half);
      const std::span<const int> all(labels);
      log.fr_loss = fr_step(models, state, rows(hr, 0, half), rows(hr, half, hr.dim(0) - half),
                            all.first(batch.hr_half), all.subspan(batch.hr_half));
      break;
    }
    case Phase::gan_pretrain: {
      const auto hr = batch.hr(), lr_images = batch.lr();
      run_critic_steps(models, state, hr, lr_images, options, log);
      log.generator = generator_step(models, state, hr, lr_images, options.weights, phi).breakdown;
      break;
    }
    case Phase::joint:
      log = joint_step(models, state, batch, options, phi);
      break;
  }
  log.phase = options.phase;
  log.lr = lr;
  log.epoch = epoch;
  ++state.iteration;
  log.iteration = state.iteration;
  return log;
}

void run_phase(Models& models, TrainState& state, const PhaseOptions& options,
               std::span<const data::ManifestRecord> records, data::PairCache& cache,
               const losses::FeatureExtractor& phi, const std::function<bool(const StepLog&)>& on_step) {
  options.validate();
  if (state.phase != options.phase) {
    throw ConfigError("train state belongs to phase " + to_string(state.phase) + ", not " + to_string(options.phase));
  }
  const auto length = phase_length(options, records.size());
  const auto per_epoch = steps_per_epoch(records.size(), options.batch_size);
  while (state.iteration < length) {
    const auto batch = data::sample_training_batch(records, options.batch_size,
                                                   step_seed(state.seed, state.iteration, batch_stream), cache);
    const auto log = train_step(models, state, batch, options, phi, state.iteration / per_epoch);
    if (on_step && !on_step(log)) break;
  }
}

}  // namespace fhgan::engine
