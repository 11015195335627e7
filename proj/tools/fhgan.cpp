#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fhgan/checkpoint.hpp"
#include "fhgan/config.hpp"
#include "fhgan/data.hpp"
#include "fhgan/engine.hpp"
#include "fhgan/error.hpp"
#include "fhgan/generator.hpp"
#include "fhgan/image_io.hpp"
#include "fhgan/metrics.hpp"
#include "fhgan/recognizer.hpp"
#include "fhgan/topology.hpp"

namespace fs = std::filesystem;
using namespace fhgan;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2 };

struct CommonFlags {
  std::string config;
  std::optional<std::int64_t> seed;
  std::string checkpoint;
  std::string out;
  std::string manifest;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file");
  cmd->add_option("--seed", f.seed, "root seed (overrides the config)");
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint to load");
  cmd->add_option("--out", f.out, "output directory (overrides the config)");
  cmd->add_option("--manifest", f.manifest, "dataset manifest CSV (overrides the config)");
  cmd->add_option("--set", f.overrides, "extra key=value override, repeatable");
}

// File first, then explicit flags.
RunConfig build_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg.apply_file(f.config);
  for (const auto& kv : f.overrides) cfg.apply_text(kv, "--set");
  if (f.seed) cfg.set("seed", std::to_string(*f.seed));
  if (!f.out.empty()) cfg.set("out", f.out);
  if (!f.manifest.empty()) cfg.set("data.manifest", f.manifest);
  return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path out = cfg.get("out");
  fs::create_directories(out);
  std::ofstream(out / "config.cfg") << cfg.dump();
  return out;
}

data::Manifest load_dataset(const RunConfig& cfg) {
  const auto& path = cfg.get("data.manifest");
  if (path.empty()) throw ConfigError("no manifest given (use --manifest or data.manifest)");
  return data::load_manifest(path);
}

int class_count(const data::Manifest& m) {
  std::int64_t top = -1;
  for (const auto& r : m.records) top = std::max(top, r.identity_id);
  return static_cast<int>(top + 1);
}

std::uint64_t phase_seed(const RunConfig& cfg, engine::Phase phase) {
  switch (phase) {
    case engine::Phase::fr_pretrain:
      return cfg.sub_seed("fr");
    case engine::Phase::gan_pretrain:
      return cfg.sub_seed("gan");
    case engine::Phase::joint:
      return cfg.sub_seed("joint");
  }
  return 0;
}

std::unique_ptr<losses::FeatureExtractor> extractor(const RunConfig& cfg) {
  return losses::make_extractor(cfg.get("loss.extractor"), cfg.sub_seed("init"));
}

// ---- topology -------------------------------------------------------------

int cmd_topology(const CommonFlags& flags) {
  const auto cfg = build_config(flags);
  const auto spec = cfg.model_specs(1).generator;
  std::ostringstream os;
  const auto plan = topology::build_plan(spec.block.num_layers, spec.base);
  os << "aggregation base c = " << spec.base << ", layers per block L = " << spec.block.num_layers
     << ", growth rate g = " << spec.block.growth_rate << "\n";
  for (int b = 0; b < spec.num_blocks; ++b) {
    const auto block = spec.block_spec(b);
    os << "block " << b + 1 << " (input " << block.input_channels << " channels)\n";
    for (int l = 1; l <= block.num_layers; ++l) {
      os << "  layer " << l << ": S = {";
      const auto& s = plan.of(l);
      for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
      os << "}, in_channels = " << topology::layer_input_channels(plan, block, l) << "\n";
    }
    const auto sparse = topology::parameter_count(block, topology::Aggregation::sparse, spec.base);
    const auto dense = topology::parameter_count(block, topology::Aggregation::dense, spec.base);
    os << "  kernel parameters: sparse " << sparse << ", dense " << dense << ", ratio " << std::fixed
       << std::setprecision(3) << static_cast<double>(sparse) / static_cast<double>(dense) << "\n";
    os.unsetf(std::ios::floatfield);
  }
  const auto sparse = topology::parameter_count(spec, topology::Aggregation::sparse);
  const auto dense = topology::parameter_count(spec, topology::Aggregation::dense);
  os << "network kernel parameters: sparse " << sparse << ", dense " << dense << "\n";
  os << "bottleneck input channels: " << topology::bottleneck_input_channels(spec) << "\n";
  os << "depth: " << topology::depth_accounting(spec) << " layers\n";
  std::cout << os.str();
  if (!flags.out.empty()) {
    const auto out = prepare_out(cfg);
    std::ofstream(out / "topology.txt") << os.str();
  }
  return kOk;
}

// ---- train ----------------------------------------------------------------

int cmd_train(const CommonFlags& flags, const std::string& phase_name) {
  const auto cfg = build_config(flags);
  const auto phase = engine::parse_phase(phase_name);
  const auto options = cfg.phase_options(phase);
  const auto manifest = load_dataset(cfg);
  const auto train = manifest.split(data::Split::train);
  if (train.empty()) throw DataError("manifest has no train records: " + cfg.get("data.manifest"));
  const auto out = prepare_out(cfg);

  engine::CheckpointBundle bundle;
  bundle.config_digest = cfg.digest();
  if (!flags.checkpoint.empty()) {
    auto loaded = engine::load_checkpoint(flags.checkpoint);
    bundle.models = std::move(loaded.models);
    if (loaded.state.phase == phase) {
      bundle.state = std::move(loaded.state);
      std::cerr << "resuming " << phase_name << " at step " << bundle.state.iteration << "\n";
      if (loaded.config_digest != bundle.config_digest) {
        std::cerr << "warning: config digest " << bundle.config_digest << " differs from the checkpoint's "
                  << loaded.config_digest << "\n";
      }
    } else {
      bundle.state = engine::TrainState::fresh(bundle.models, phase, phase_seed(cfg, phase));
    }
  } else {
    bundle.models = engine::init_models(cfg.model_specs(class_count(manifest)), cfg.sub_seed("init"));
    bundle.state = engine::TrainState::fresh(bundle.models, phase, phase_seed(cfg, phase));
  }

  data::PairCache cache(manifest);
  const auto phi = extractor(cfg);
  const auto every = cfg.get_int("train.checkpoint_every");
  std::ofstream log(out / (phase_name + "_log.jsonl"), bundle.state.iteration > 0 ? std::ios::app : std::ios::trunc);
  engine::run_phase(bundle.models, bundle.state, options, train, cache, *phi, [&](const engine::StepLog& step) {
    log << step.to_json() << "\n";
    if (every > 0 && step.iteration % every == 0) {
      log.flush();
      engine::save_checkpoint(bundle, out / (phase_name + "_step" + std::to_string(step.iteration) + ".ckpt"));
    }
    return true;
  });
  const auto final_path = out / (phase_name + ".ckpt");
  engine::save_checkpoint(bundle, final_path);
  std::cout << "wrote " << final_path.string() << " after " << bundle.state.iteration << " steps\n";
  return kOk;
}

// ---- hallucinate ----------------------------------------------------------

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Image8 side_by_side(const std::vector<Image8>& panels) {
  int width = 0, height = 0;
  for (const auto& p : panels) {
    width += p.width;
    height = std::max(height, p.height);
  }
  Image8 grid(width, height, 255);
  int x0 = 0;
  for (const auto& p : panels) {
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x)
        for (int c = 0; c < 3; ++c) grid.at(y, x0 + x, c) = p.at(y, x, c);
    x0 += p.width;
  }
  return grid;
}

int cmd_hallucinate(const CommonFlags& flags, const std::string& input, const std::string& hr_dir) {
  const auto cfg = build_config(flags);
  if (flags.checkpoint.empty()) throw ConfigError("hallucinate needs --checkpoint");
  const auto bundle = engine::load_checkpoint(flags.checkpoint);
  const auto inputs = png_files(input);
  const auto out = prepare_out(cfg);
  if (inputs.empty()) {
    std::cerr << "warning: no PNG files in " << input << "\n";
    return kOk;
  }
  const bool grid = cfg.get_bool("hallucinate.grid");
  const int r = bundle.models.generator.spec.upscale_factor;
  for (const auto& path : inputs) {
    const auto lr = to_model_range(read_png(path));
    const auto sr = to_image8(generator::generate(bundle.models.generator, lr));
    write_png(out / path.filename(), sr);
    if (grid) {
      std::vector<Image8> panels{to_image8(data::upsample_bilinear(lr, r)), sr};
      if (!hr_dir.empty() && fs::exists(fs::path(hr_dir) / path.filename())) {
        panels.push_back(read_png(fs::path(hr_dir) / path.filename()));
      }
      write_png(out / (path.stem().string() + "_grid.png"), side_by_side(panels));
    }
  }
  std::cout << "wrote " << inputs.size() << " images to " << out.string() << "\n";
  return kOk;
}

// ---- evaluate / verify ----------------------------------------------------

struct EvalSet {
  std::vector<data::ImagePair> pairs;
  std::vector<std::string> names;
  std::vector<data::ManifestRecord> records;
  std::vector<data::VerificationPair> verification;
};

EvalSet eval_set(const RunConfig& cfg, const data::Manifest& manifest, bool require_verification) {
  EvalSet s;
  s.records = manifest.split(data::parse_split(cfg.get("eval.split")));
  if (s.records.empty()) throw DataError("manifest has no " + cfg.get("eval.split") + " records");
  data::PairCache cache(manifest);
  for (const auto& r : s.records) {
    s.pairs.push_back(cache.get(r));
    s.names.push_back(r.image_path);
  }
  std::map<std::int64_t, int> per_identity;
  for (const auto& r : s.records) ++per_identity[r.identity_id];
  const auto repeated = std::count_if(per_identity.begin(), per_identity.end(), [](auto& kv) { return kv.second > 1; });
  if (repeated < 2 && !require_verification) {
    std::cerr << "warning: the " << cfg.get("eval.split")
              << " split has fewer than 2 identities with repeated images; skipping verification\n";
    return s;
  }
  const auto n = cfg.get_int("eval.verification_pairs");
  s.verification = data::make_verification_pairs(s.records, n > 0 ? n : s.records.size(), cfg.sub_seed("data"));
  return s;
}

engine::Models models_for_eval(const RunConfig& cfg, const CommonFlags& flags, const data::Manifest& manifest,
                               bool need_checkpoint) {
  if (!flags.checkpoint.empty()) return engine::load_checkpoint(flags.checkpoint).models;
  if (need_checkpoint) throw ConfigError("--checkpoint is required for eval.generator = model");
  return engine::init_models(cfg.model_specs(class_count(manifest)), cfg.sub_seed("init"));
}

int cmd_evaluate(const CommonFlags& flags) {
  const auto cfg = build_config(flags);
  const auto manifest = load_dataset(cfg);
  const auto which = cfg.get("eval.generator");
  if (which != "model" && which != "bilinear" && which != "oracle") {
    throw ConfigError("eval.generator must be model, bilinear or oracle, got '" + which + "'");
  }
  const auto models = models_for_eval(cfg, flags, manifest, which == "model");
  const auto set = eval_set(cfg, manifest, false);
  const auto out = prepare_out(cfg);
  const auto window = cfg.ssim_window();

  const metrics::EmbedFn embed = [&](const Tensor& images) { return recognizer::embed_images(models.recognizer, images); };
  const metrics::SrFn bilinear = [](const data::ImagePair& p) { return data::upsample_bilinear(p.lr); };
  metrics::SrFn primary = bilinear;
  if (which == "model") primary = [&](const data::ImagePair& p) { return generator::generate(models.generator, p.lr); };
  if (which == "oracle") primary = [](const data::ImagePair& p) { return p.hr; };

  std::vector<metrics::MetricReport> reports;
  reports.push_back(metrics::evaluate_sr(which, primary, embed, set.pairs, set.names, set.verification, window));
  if (which != "bilinear") {
    reports.push_back(metrics::evaluate_sr("bilinear", bilinear, embed, set.pairs, set.names, set.verification, window));
  }
  std::ofstream(out / "report.json") << metrics::reports_to_json(reports) << "\n";
  std::ofstream text(out / "report.txt");
  for (const auto& r : reports) {
    text << r.to_text() << "\n";
    std::cout << r.to_text() << "\n";
  }
  return kOk;
}

// Verification of the recognizer on HR test images, and on model SR when a checkpoint is given.
int cmd_verify(const CommonFlags& flags) {
  const auto cfg = build_config(flags);
  const auto manifest = load_dataset(cfg);
  const auto models = models_for_eval(cfg, flags, manifest, true);
  const auto set = eval_set(cfg, manifest, true);
  const auto out = prepare_out(cfg);

  auto sweep = [&](const std::vector<Tensor>& images) {
    const auto e = recognizer::embed_images(models.recognizer, stack(images));
    const auto d = e.dim(1);
    std::vector<metrics::ScoredPair> scored;
    for (const auto& p : set.verification) {
      const std::span<const double> a(e.data() + p.a * d, d), b(e.data() + p.b * d, d);
      scored.push_back({recognizer::cosine_similarity(a, b), p.same_identity});
    }
    return metrics::verification_accuracy(scored);
  };
  std::vector<Tensor> hr, sr;
  for (const auto& p : set.pairs) {
    hr.push_back(p.hr);
    sr.push_back(to_model_range(to_image8(generator::generate(models.generator, p.lr))));
  }
  const auto on_hr = sweep(hr), on_sr = sweep(sr);
  std::ostringstream os;
  os << "pairs " << set.verification.size() << "\n"
     << "hr accuracy " << on_hr.accuracy << " threshold " << on_hr.threshold << "\n"
     << "sr accuracy " << on_sr.accuracy << " threshold " << on_sr.threshold << "\n";
  std::cout << os.str();
  std::ofstream(out / "verify.txt") << os.str();
  return kOk;
}

// ---- synth ----------------------------------------------------------------

int cmd_synth(const CommonFlags& flags, const data::SynthOptions& base) {
  const auto cfg = build_config(flags);
  auto options = base;
  options.seed = cfg.sub_seed("data");
  const auto manifest = data::synth_toy_dataset(options, cfg.get("out"));
  std::cout << "wrote " << manifest.records.size() << " images and manifest.csv to " << cfg.get("out") << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face hallucination GAN: training, hallucination and evaluation"};
  app.require_subcommand(1);

  CommonFlags topo_f, train_f, hall_f, eval_f, verify_f, synth_f;
  auto* topo = app.add_subcommand("topology", "print predecessor sets, channel and parameter accounting");
  add_common(topo, topo_f);

  std::string phase;
  auto* train = app.add_subcommand("train", "run one training phase");
  add_common(train, train_f);
  train->add_option("--phase", phase, "fr_pretrain, gan_pretrain or joint")->required();

  std::string input, hr_dir;
  auto* hall = app.add_subcommand("hallucinate", "upscale every PNG in a directory");
  add_common(hall, hall_f);
  hall->add_option("--input", input, "directory of low-resolution PNGs")->required();
  hall->add_option("--hr", hr_dir, "directory of matching high-resolution PNGs for grids");

  auto* eval = app.add_subcommand("evaluate", "PSNR, SSIM and verification against the bilinear baseline");
  add_common(eval, eval_f);

  auto* verify = app.add_subcommand("verify", "face verification accuracy on HR and hallucinated images");
  add_common(verify, verify_f);

  data::SynthOptions synth_opt;
  auto* synth = app.add_subcommand("synth", "write the procedural toy face dataset");
  add_common(synth, synth_f);
  synth->add_option("--identities", synth_opt.num_identities, "number of identities")->check(CLI::PositiveNumber);
  synth->add_option("--images", synth_opt.images_per_identity, "images per identity")->check(CLI::PositiveNumber);
  synth->add_option("--test", synth_opt.test_per_identity, "test images per identity")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*topo) return cmd_topology(topo_f);
    if (*train) return cmd_train(train_f, phase);
    if (*hall) return cmd_hallucinate(hall_f, input, hr_dir);
    if (*eval) return cmd_evaluate(eval_f);
    if (*verify) return cmd_verify(verify_f);
    if (*synth) return cmd_synth(synth_f, synth_opt);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
