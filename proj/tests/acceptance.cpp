// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails. Each criterion also has a wall-clock
// budget; exceeding it is a failure.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fhgan/checkpoint.hpp"
#include "fhgan/critic.hpp"
#include "fhgan/data.hpp"
#include "fhgan/engine.hpp"
#include "fhgan/generator.hpp"
#include "fhgan/losses.hpp"
#include "fhgan/metrics.hpp"
#include "fhgan/recognizer.hpp"
#include "fhgan/topology.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace fhgan;
using fhgan::testing::numeric_gradient;
using fhgan::testing::random_tensor;
using fhgan::testing::relative_error;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a named check; the first failing check names itself in the detail.
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "failed: ";
      else detail << ", ";
      detail << what;
    }
    pass = pass && ok;
  }
};

fs::path g_workdir;

fs::path work(const std::string& name) {
  const auto dir = g_workdir / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// The desk-scale model used by criteria 7 and 8.
engine::ModelSpecs desk_specs(int num_classes) {
  engine::ModelSpecs s;
  s.generator.num_blocks = 2;
  s.generator.block.num_layers = 3;
  s.generator.block.growth_rate = 8;
  s.generator.llfe_channels = 32;
  s.generator.block.input_channels = 32;
  s.generator.bottleneck_channels = 64;
  s.critic.base_channels = 8;
  s.recognizer.embedding_dim = 64;
  s.arcface.embedding_dim = 64;
  s.arcface.num_classes = num_classes;
  return s;
}

// ---- 1 ----------------------------------------------------------------------

void topology_oracle(Outcome& out) {
  int mismatches = 0;
  for (int c : {2, 3}) {
    for (int l = 1; l <= 64; ++l) {
      std::vector<int> expected;
      for (int j = 0; j < l; ++j) {
        // j is a predecessor iff l - j is a power of c.
        int gap = l - j;
        while (gap % c == 0) gap /= c;
        if (gap == 1) expected.push_back(j);
      }
      std::sort(expected.rbegin(), expected.rend());
      if (topology::predecessors(l, c) != expected) ++mismatches;
    }
  }
  out.expect(mismatches == 0, std::to_string(mismatches) + " predecessor sets differ");
  const int depth = topology::depth_accounting(topology::NetworkSpec{});
  out.expect(depth == 41, "depth " + std::to_string(depth));
  out.detail << "128 predecessor sets match enumeration; default depth " << depth;
}

// ---- 2 ----------------------------------------------------------------------

// Kernel parameters from channel sums, using enumerated predecessor sets.
std::int64_t block_kernels(const topology::BlockSpec& b, bool dense) {
  std::int64_t total = 0;
  for (int l = 1; l <= b.num_layers; ++l) {
    std::int64_t in = 0;
    for (int j = 0; j < l; ++j) {
      int gap = l - j;
      while (gap % 2 == 0) gap /= 2;
      if (dense || gap == 1) in += j == 0 ? b.input_channels : b.growth_rate;
    }
    total += in * b.growth_rate * b.kernel_size * b.kernel_size;
  }
  return total;
}

void parameter_reduction(Outcome& out) {
  const topology::BlockSpec block;
  const auto sparse = topology::parameter_count(block, topology::Aggregation::sparse);
  const auto dense = topology::parameter_count(block, topology::Aggregation::dense);
  out.expect(sparse == 156672 && dense == 248832, "block counts " + std::to_string(sparse) + "/" + std::to_string(dense));
  out.expect(sparse == block_kernels(block, false) && dense == block_kernels(block, true),
             "channel-sum arithmetic disagrees");
  for (int b = 1; b <= 6; ++b) {
    topology::NetworkSpec spec;
    spec.num_blocks = b;
    out.expect(topology::parameter_count(spec, topology::Aggregation::sparse) <
                   topology::parameter_count(spec, topology::Aggregation::dense),
               "B=" + std::to_string(b) + " not reduced");
  }
  out.detail << "block " << sparse << " vs " << dense << " (ratio " << std::fixed << std::setprecision(3)
             << static_cast<double>(sparse) / static_cast<double>(dense) << "), sparse < dense for B=1..6";
}

// ---- 3 ----------------------------------------------------------------------

Tensor grad_wrt(const std::function<ag::Var(const ag::Var&)>& f, const Tensor& x0) {
  ag::Var x(x0, true);
  return ag::grad(f(x), std::span<const ag::Var>(&x, 1))[0].value();
}

double gradient_error(const std::function<ag::Var(const ag::Var&)>& f, const Tensor& x0) {
  const auto numeric = numeric_gradient(
      [&](const Tensor& t) {
        ag::NoGradGuard no_grad;
        return ag::value_of(f(ag::constant(t)));
      },
      x0);
  return relative_error(grad_wrt(f, x0), numeric);
}

Tensor unit_rows(Tensor t) {
  const auto n = t.dim(0), d = t.dim(1);
  for (std::int64_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::int64_t k = 0; k < d; ++k) norm += t[i * d + k] * t[i * d + k];
    for (std::int64_t k = 0; k < d; ++k) t[i * d + k] /= std::sqrt(norm);
  }
  return t;
}

void gradient_suite(Outcome& out) {
  std::vector<std::pair<std::string, double>> errors;

  topology::NetworkSpec g;
  g.num_blocks = 2;
  g.block.num_layers = 3;
  g.block.growth_rate = 4;
  g.llfe_channels = 6;
  g.block.input_channels = 6;
  g.bottleneck_channels = 5;
  g.upscale_factor = 2;
  g.upsample_channels = 3;
  auto gen = generator::init_generator(g, 31);
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (std::size_t i = 0; i < gen.store.size(); ++i) {
    const auto& name = gen.store.names()[i];
    if (name.ends_with(".bias") || name.ends_with(".prelu"))
      for (auto& v : gen.store.tensors()[i].values()) v += u(rng);
  }
  const auto lr = random_tensor({1, 3, 8, 8}, 33, 0.5);
  errors.emplace_back("generator params", fhgan::testing::store_gradient_error(
                                              [&](const Bindings& b) {
                                                return ag::sum(generator::generator_forward(g, b, ag::constant(lr)));
                                              },
                                              gen.store));
  {
    Bindings b(gen.store, false);
    errors.emplace_back("generator input",
                        gradient_error([&](const ag::Var& x) { return ag::sum(generator::generator_forward(g, b, x)); }, lr));
  }

  recognizer::ArcFaceConfig arc;
  arc.scale = 4;
  arc.margin = 0.5;
  arc.num_classes = 3;
  arc.embedding_dim = 3;
  const auto e0 = unit_rows(random_tensor({4, 3}, 34));
  const auto w0 = random_tensor({3, 3}, 35);
  const int labels[] = {2, 0, 1, 0};
  errors.emplace_back("arcface embeddings", gradient_error(
                                                [&](const ag::Var& e) {
                                                  return recognizer::arcface_loss(recognizer::l2_normalize_rows(e),
                                                                                  labels, ag::constant(w0), arc);
                                                },
                                                e0));
  errors.emplace_back("arcface class weights", gradient_error(
                                                   [&](const ag::Var& w) {
                                                     return recognizer::arcface_loss(ag::constant(e0), labels, w, arc);
                                                   },
                                                   w0));

  const auto hr = random_tensor({1, 3, 16, 16}, 36), sr = random_tensor({1, 3, 16, 16}, 37);
  errors.emplace_back("pixel", gradient_error([&](const ag::Var& x) { return losses::pixel_loss(ag::constant(hr), x); }, sr));
  const losses::RandomConvExtractor phi(38, 4);
  errors.emplace_back("perceptual", gradient_error(
                                        [&](const ag::Var& x) { return losses::perceptual_loss(phi, ag::constant(hr), x); },
                                        sr));
  recognizer::RecognizerSpec rs;
  rs.input_size = 16;
  rs.stem_channels = 3;
  rs.unit_widths = {4};
  rs.unit_strides = {2};
  rs.embedding_dim = 6;
  recognizer::ArcFaceConfig rarc;
  rarc.embedding_dim = 6;
  const auto rec = recognizer::init_recognizer(rs, rarc, 39);
  Bindings rb(rec.backbone, false);
  const losses::EmbedFn fr = [&](const ag::Var& x) { return recognizer::embed(rs, rb, x); };
  errors.emplace_back("identity", gradient_error(
                                      [&](const ag::Var& x) { return losses::identity_loss(fr, ag::constant(hr), x); },
                                      sr));

  critic::CriticSpec cs;
  cs.input_size = 8;
  cs.base_channels = 4;
  cs.max_channels = 6;
  cs.num_layers = 2;
  auto cp = critic::init_critic(cs, 40);
  for (std::size_t i = 0; i < cp.store.size(); ++i)
    if (cp.store.names()[i].ends_with(".bias")) cp.store.tensors()[i] = random_tensor(cp.store.tensors()[i].shape(), 41 + i, 0.1);
  Bindings cb(cp.store, false);
  errors.emplace_back("critic input", gradient_error(
                                          [&](const ag::Var& x) { return ag::sum(critic::critic_forward(cs, cb, x)); },
                                          random_tensor({1, 3, 8, 8}, 42)));

  double worst = 0.0;
  for (const auto& [name, err] : errors) {
    out.expect(err < 1e-4, name + " error " + std::to_string(err));
    worst = std::max(worst, err);
  }
  out.detail << errors.size() << " gradient checks, worst relative error " << std::scientific << std::setprecision(2)
             << worst;
}

// ---- 4 ----------------------------------------------------------------------

void penalty_check(Outcome& out) {
  const auto direction = random_tensor({3, 4, 4}, 50);
  const auto x = random_tensor({6, 3, 4, 4}, 51);
  double worst = 0.0;
  for (double norm : {0.5, 1.0, 3.0}) {
    double n2 = 0.0;
    for (double v : direction.values()) n2 += v * v;
    Tensor w = direction;
    for (auto& v : w.values()) v *= norm / std::sqrt(n2);
    const critic::CriticFn linear = [&w](const ag::Var& images) {
      const auto n = images.dim(0);
      const auto flat = ag::reshape(images, {n, w.size()});
      return ag::reshape(ag::matmul(flat, ag::constant(w.reshaped({w.size(), 1}))), {n});
    };
    const double gp = ag::value_of(critic::gradient_penalty(linear, x, 10.0));
    const double err = std::abs(gp - 10.0 * (norm - 1.0) * (norm - 1.0));
    out.expect(err < 1e-6, "norm " + std::to_string(norm) + " off by " + std::to_string(err));
    worst = std::max(worst, err);
  }
  out.detail << "penalties 2.5, 0, 40 reproduced, worst error " << std::scientific << std::setprecision(2) << worst;
}

// ---- 5 ----------------------------------------------------------------------

double softmax_oracle(const Tensor& e, std::span<const int> labels, const Tensor& w) {
  const auto n = e.dim(0), d = e.dim(1), k = w.dim(1);
  long double total = 0.0L;
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<long double> logits(static_cast<std::size_t>(k));
    for (std::int64_t j = 0; j < k; ++j) {
      long double dot = 0.0L, norm = 0.0L;
      for (std::int64_t q = 0; q < d; ++q) {
        dot += e[i * d + q] * w[q * k + j];
        norm += w[q * k + j] * w[q * k + j];
      }
      logits[static_cast<std::size_t>(j)] = dot / std::sqrt(norm);
    }
    long double z = 0.0L;
    for (auto l : logits) z += std::exp(l);
    total += std::log(z) - logits[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  }
  return static_cast<double>(total / n);
}

void arcface_reduction(Outcome& out) {
  recognizer::ArcFaceConfig plain;
  plain.scale = 1.0;
  plain.margin = 0.0;
  plain.num_classes = 3;
  plain.embedding_dim = 3;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto e = unit_rows(random_tensor({4, 3}, 60 + seed));
    const auto w = random_tensor({3, 3}, 80 + seed);
    const int labels[] = {static_cast<int>(seed % 3), 2, 1, 0};
    const double got = ag::value_of(recognizer::arcface_loss(ag::constant(e), labels, ag::constant(w), plain));
    worst = std::max(worst, std::abs(got - softmax_oracle(e, labels, w)));
  }
  out.expect(worst < 1e-10, "softmax oracle off by " + std::to_string(worst));

  recognizer::ArcFaceConfig margin_cfg;
  margin_cfg.scale = 64.0;
  margin_cfg.margin = 0.5;
  margin_cfg.num_classes = 2;
  margin_cfg.embedding_dim = 2;
  const Tensor e({1, 2}, std::vector<double>{1, 0});
  const Tensor w({2, 2}, std::vector<double>{1, 0, 0, 1});
  const int y[] = {0};
  const double aligned = ag::value_of(recognizer::arcface_loss(ag::constant(e), y, ag::constant(w), margin_cfg));
  out.expect(aligned >= 0.0 && aligned < 1e-12, "aligned loss " + std::to_string(aligned));
  out.detail << "softmax oracle max error " << std::scientific << std::setprecision(2) << worst
             << " over 20 toys; aligned loss " << aligned;
}

// ---- 6 ----------------------------------------------------------------------

void metric_correctness(Outcome& out) {
  const Image8 a(32, 32, 100), b(32, 32, 116), c(32, 32, 110);
  const double p = metrics::psnr(a, b), s = metrics::ssim(a, c);
  out.expect(std::abs(p - 24.05) <= 0.01, "psnr " + std::to_string(p));
  out.expect(std::abs(s - 0.9955) <= 0.0005, "ssim " + std::to_string(s));
  Image8 noise(32, 32);
  std::mt19937_64 rng(70);
  for (auto& v : noise.rgb) v = static_cast<std::uint8_t>(rng() & 0xff);
  out.expect(metrics::psnr(noise, noise) == metrics::kInfinitePsnr, "identical psnr not infinite");
  out.expect(metrics::ssim(noise, noise) == 1.0, "identical ssim not 1");

  std::normal_distribution<double> n(0, 1);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<metrics::ScoredPair> pairs;
    for (int i = 0; i < 10; ++i) {
      const bool same = i % 2 == 0 || i == 9;
      pairs.push_back({std::round((n(rng) + (same ? 0.8 : 0.0)) * 4) / 4, same});
    }
    std::vector<double> thresholds{-INFINITY, INFINITY};
    for (const auto& x : pairs) thresholds.push_back(x.score);
    for (const auto& x : pairs)
      for (const auto& y : pairs) thresholds.push_back(0.5 * (x.score + y.score));
    double best = 0.0;
    for (double t : thresholds) {
      int ok = 0;
      for (const auto& x : pairs) ok += (x.score > t) == x.same_identity;
      best = std::max(best, ok / 10.0);
    }
    if (metrics::verification_accuracy(pairs).accuracy != best) ++mismatches;
  }
  out.expect(mismatches == 0, std::to_string(mismatches) + " sweeps disagree");
  out.detail << "psnr " << std::fixed << std::setprecision(4) << p << " dB, ssim " << s
             << ", sentinels exact, 200 sweeps match exhaustive search";
}

// ---- 7 ----------------------------------------------------------------------

void desk_convergence(Outcome& out) {
  data::SynthOptions opt;
  opt.num_identities = 4;
  opt.images_per_identity = 2;
  opt.seed = 7;
  const auto manifest = data::synth_toy_dataset(opt, work("convergence"));
  const auto train = manifest.split(data::Split::train);
  data::PairCache cache(manifest);

  auto models = engine::init_models(desk_specs(4), 1);
  auto state = engine::TrainState::fresh(models, engine::Phase::gan_pretrain, 5);
  engine::PhaseOptions o;
  o.phase = engine::Phase::gan_pretrain;
  o.steps = 500;
  o.lr = 1e-3;
  o.batch_size = 8;
  o.weights = {1.0, 0.0, 0.0, 0.0};
  const losses::IdentityExtractor phi;
  double first = 0.0, last = 0.0;
  engine::run_phase(models, state, o, train, cache, phi, [&](const engine::StepLog& log) {
    if (log.iteration == 1) first = log.generator->pixel;
    last = log.generator->pixel;
    return true;
  });

  std::vector<data::ImagePair> pairs;
  std::vector<std::string> names;
  for (const auto& r : train) {
    pairs.push_back(cache.get(r));
    names.push_back(r.image_path);
  }
  const metrics::EmbedFn no_embed;
  const auto model = metrics::evaluate_sr(
      "model", [&](const data::ImagePair& p) { return generator::generate(models.generator, p.lr); }, no_embed, pairs,
      names, {});
  const auto bilinear = metrics::evaluate_sr(
      "bilinear", [](const data::ImagePair& p) { return data::upsample_bilinear(p.lr); }, no_embed, pairs, names, {});
  out.expect(model.mean_psnr > bilinear.mean_psnr, "model does not beat bilinear");
  out.detail << "mean train PSNR " << std::fixed << std::setprecision(2) << model.mean_psnr << " dB vs bilinear "
             << bilinear.mean_psnr << " dB; pixel loss " << std::setprecision(4) << first << " -> " << last;
}

// ---- 8 ----------------------------------------------------------------------

// Identity weight and joint-phase settings for the desk ablation.
constexpr double kAblationIdentityWeight = 100.0;
constexpr double kAblationJointLr = 1e-4;
constexpr int kAblationJointSteps = 40;

void identity_ablation(Outcome& out) {
  data::SynthOptions opt;
  opt.num_identities = 6;
  opt.images_per_identity = 4;
  opt.test_per_identity = 1;
  opt.seed = 7;
  const auto manifest = data::synth_toy_dataset(opt, work("ablation"));
  const auto train = manifest.split(data::Split::train);
  const auto test = manifest.split(data::Split::test);
  data::PairCache cache(manifest);
  const auto phi = losses::make_extractor("random_conv", 3);

  int agree = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto models = engine::init_models(desk_specs(opt.num_identities), seed);
    auto pretrain = [&](engine::Phase phase, std::uint64_t stream, std::int64_t steps, losses::LossWeights weights) {
      auto state = engine::TrainState::fresh(models, phase, seed * 10 + stream);
      engine::PhaseOptions o;
      o.phase = phase;
      o.steps = steps;
      o.lr = 1e-3;
      o.weights = weights;
      engine::run_phase(models, state, o, train, cache, *phi, {});
    };
    pretrain(engine::Phase::fr_pretrain, 1, 150, {});
    pretrain(engine::Phase::gan_pretrain, 2, 100, {1.0, 0.0, 0.0, 0.0});
    // The pretrained recognizer is frozen as the judge; each arm fine-tunes its own copy.
    const auto judge = models.recognizer;

    auto distance = [&](const engine::Models& m) {
      double total = 0.0;
      for (const auto& r : test) {
        const auto& p = cache.get(r);
        const auto sr = to_model_range(to_image8(generator::generate(m.generator, p.lr)));
        const auto e = recognizer::embed_images(judge, stack(std::vector<Tensor>{p.hr, sr}));
        const auto d = e.dim(1);
        double s = 0.0;
        for (std::int64_t k = 0; k < d; ++k) s += (e[k] - e[d + k]) * (e[k] - e[d + k]);
        total += std::sqrt(s);
      }
      return total / static_cast<double>(test.size());
    };
    auto joint = [&](double identity_weight) {
      auto m = models;
      auto state = engine::TrainState::fresh(m, engine::Phase::joint, seed * 10 + 3);
      engine::PhaseOptions o;
      o.phase = engine::Phase::joint;
      o.steps = kAblationJointSteps;
      o.lr = kAblationJointLr;
      o.weights = {1.0, 0.05, 0.001, identity_weight};
      engine::run_phase(m, state, o, train, cache, *phi, {});
      return distance(m);
    };
    const double with = joint(kAblationIdentityWeight), without = joint(0.0);
    agree += with < without;
    out.detail << (seed > 1 ? "; " : "") << "seed " << seed << ": " << std::scientific << std::setprecision(3) << with
               << " vs " << without;
  }
  out.expect(agree >= 2, std::to_string(agree) + "/3 seeds favour the identity loss");
  out.detail << " (" << agree << "/3 seeds smaller with identity loss)";
}

// ---- 9 ----------------------------------------------------------------------

engine::ModelSpecs small_specs(int num_classes) {
  engine::ModelSpecs s;
  s.generator.num_blocks = 1;
  s.generator.block.num_layers = 2;
  s.generator.block.growth_rate = 4;
  s.generator.llfe_channels = 8;
  s.generator.block.input_channels = 8;
  s.generator.bottleneck_channels = 8;
  s.generator.upsample_channels = 4;
  s.critic.base_channels = 4;
  s.critic.max_channels = 16;
  s.recognizer.stem_channels = 4;
  s.recognizer.unit_widths = {4, 8};
  s.recognizer.unit_strides = {2, 2};
  s.recognizer.embedding_dim = 8;
  s.arcface.num_classes = num_classes;
  s.arcface.embedding_dim = 8;
  return s;
}

void determinism(Outcome& out) {
  data::SynthOptions opt;
  opt.num_identities = 4;
  opt.images_per_identity = 2;
  opt.seed = 9;
  const auto dir = work("determinism");
  const auto manifest = data::synth_toy_dataset(opt, dir);
  const auto& records = manifest.records;
  const losses::RandomConvExtractor phi(4, 4);
  engine::PhaseOptions o;
  o.phase = engine::Phase::joint;
  o.steps = 8;
  o.batch_size = 4;
  o.lr = 1e-3;

  auto run = [&](engine::Models& m, engine::TrainState& s, std::vector<std::string>& lines, std::int64_t stop) {
    data::PairCache cache(manifest);
    engine::run_phase(m, s, o, records, cache, phi, [&](const engine::StepLog& log) {
      lines.push_back(log.to_json());
      return log.iteration < stop;
    });
  };
  std::vector<std::string> a, b, resumed;
  for (auto* lines : {&a, &b}) {
    auto m = engine::init_models(small_specs(4), 21);
    auto s = engine::TrainState::fresh(m, engine::Phase::joint, 22);
    run(m, s, *lines, 100);
  }
  out.expect(a.size() == 8 && a == b, "repeated runs differ");

  auto m = engine::init_models(small_specs(4), 21);
  auto s = engine::TrainState::fresh(m, engine::Phase::joint, 22);
  run(m, s, resumed, 4);
  engine::save_checkpoint({m, s, ""}, dir / "mid.ckpt");
  auto loaded = engine::load_checkpoint(dir / "mid.ckpt");
  run(loaded.models, loaded.state, resumed, 100);
  out.expect(resumed == a, "resumed trajectory differs");
  out.detail << "two 8-step joint runs bitwise identical; 4 + save/load + 4 replays the same " << resumed.size()
             << " log records";
}

// ---- 10 ---------------------------------------------------------------------

void connectivity_probe(Outcome& out) {
  topology::NetworkSpec spec;
  spec.num_blocks = 1;
  spec.block.num_layers = 8;
  spec.block.growth_rate = 3;
  spec.llfe_channels = 4;
  spec.block.input_channels = 4;
  spec.bottleneck_channels = 4;
  spec.upsample_channels = 2;
  const auto p = generator::init_generator(spec, 90);
  Bindings b(p.store, false);
  ag::NoGradGuard no_grad;
  const auto plan = topology::build_plan(8, 2);
  const auto x = ag::constant(fhgan::testing::uniform_tensor({1, 4, 6, 6}, 91, 0.1, 1.0));
  generator::BlockTrace clean;
  generator::sparse_block_forward(spec, b, 0, plan, x, &clean);
  int unchanged = 0, changed = 0;
  for (int l = 1; l <= 8; ++l) {
    const auto& s = plan.of(l);
    for (int z = 0; z < l; ++z) {
      generator::BlockTrace probe;
      probe.zero_layer = z;
      probe.zero_only_in = l;
      generator::sparse_block_forward(spec, b, 0, plan, x, &probe);
      const bool same = probe.pre_activations[l - 1] == clean.pre_activations[l - 1];
      const bool linked = std::find(s.begin(), s.end(), z) != s.end();
      out.expect(linked != same, "layer " + std::to_string(l) + " vs " + std::to_string(z));
      (same ? unchanged : changed) += 1;
    }
  }
  out.detail << unchanged << " non-predecessor probes bitwise unchanged, " << changed << " predecessor probes changed";
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-10"};
  std::string workdir = (fs::temp_directory_path() / "fhgan_acceptance").string();
  std::vector<int> only;
  app.add_option("--workdir", workdir, "scratch directory for toy datasets and checkpoints");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  g_workdir = workdir;
  fs::create_directories(g_workdir);

  const std::vector<Criterion> criteria{
      {1, "topology oracle equivalence", 1, topology_oracle},
      {2, "parameter reduction", 1, parameter_reduction},
      {3, "gradient suite", 120, gradient_suite},
      {4, "gradient penalty analytic check", 5, penalty_check},
      {5, "angular margin loss reduction", 5, arcface_reduction},
      {6, "metric correctness", 10, metric_correctness},
      {7, "desk-scale convergence", 15 * 60, desk_convergence},
      {8, "identity-loss ablation", 30 * 60, identity_ablation},
      {9, "determinism and checkpointing", 10 * 60, determinism},
      {10, "sparse-connectivity probe", 10, connectivity_probe},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome outcome;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(outcome);
    } catch (const std::exception& e) {
      outcome.expect(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    outcome.expect(seconds <= c.budget_s, "over the " + std::to_string(static_cast<int>(c.budget_s)) + " s budget");
    failures += !outcome.pass;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << ", " << std::fixed
              << std::setprecision(2) << seconds << " s): " << outcome.detail.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
