#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>

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

namespace py = pybind11;
using namespace fhgan;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image8 to_image(const U8Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("expected an (H, W, 3) uint8 array");
  Image8 img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(img.rgb.data(), a.data(), img.rgb.size());
  return img;
}

U8Array to_array(const Image8& img) {
  U8Array out({img.height, img.width, 3});
  std::memcpy(out.mutable_data(), img.rgb.data(), img.rgb.size());
  return out;
}

Tensor to_tensor(const F64Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

F64Array to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  F64Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

// A loaded checkpoint: hallucination and embedding on 8-bit images.
class Model {
 public:
  explicit Model(const std::filesystem::path& path) : models_(engine::load_checkpoint(path).models) {}

  U8Array hallucinate(const U8Array& lr) const {
    return to_array(to_image8(generator::generate(models_.generator, to_model_range(to_image(lr)))));
  }

  F64Array embed(const U8Array& image) const {
    const auto x = to_model_range(to_image(image));
    const auto e = recognizer::embed_images(models_.recognizer, x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}));
    return to_numpy(e.reshaped({e.dim(1)}));
  }

  int upscale_factor() const { return models_.generator.spec.upscale_factor; }
  int embedding_dim() const { return models_.recognizer.spec.embedding_dim; }

 private:
  engine::Models models_;
};

// Runs one phase from a config text; returns the per-step JSON records.
std::vector<std::string> train_phase(const std::string& config_text, const std::string& phase_name,
                                     const std::filesystem::path& out_checkpoint,
                                     const std::optional<std::filesystem::path>& checkpoint) {
  RunConfig cfg;
  cfg.apply_text(config_text, "<config>");
  const auto phase = engine::parse_phase(phase_name);
  const auto options = cfg.phase_options(phase);
  const auto manifest = data::load_manifest(cfg.get("data.manifest"));
  std::int64_t top = -1;
  for (const auto& r : manifest.records) top = std::max(top, r.identity_id);

  engine::CheckpointBundle bundle;
  bundle.config_digest = cfg.digest();
  const auto seed = cfg.sub_seed(phase == engine::Phase::fr_pretrain    ? "fr"
                                 : phase == engine::Phase::gan_pretrain ? "gan"
                                                                        : "joint");
  if (checkpoint) {
    auto loaded = engine::load_checkpoint(*checkpoint);
    bundle.models = std::move(loaded.models);
    bundle.state = loaded.state.phase == phase ? std::move(loaded.state)
                                               : engine::TrainState::fresh(bundle.models, phase, seed);
  } else {
    bundle.models = engine::init_models(cfg.model_specs(static_cast<int>(top + 1)), cfg.sub_seed("init"));
    bundle.state = engine::TrainState::fresh(bundle.models, phase, seed);
  }
  data::PairCache cache(manifest);
  const auto phi = losses::make_extractor(cfg.get("loss.extractor"), cfg.sub_seed("init"));
  std::vector<std::string> logs;
  {
    py::gil_scoped_release release;
    engine::run_phase(bundle.models, bundle.state, options, manifest.split(data::Split::train), cache, *phi,
                      [&](const engine::StepLog& step) {
                        logs.push_back(step.to_json());
                        return true;
                      });
  }
  engine::save_checkpoint(bundle, out_checkpoint);
  return logs;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "C++ core of the fhgan face hallucination library";

  py::register_exception<Error>(m, "FhganError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_OSError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_OSError);
  py::register_exception<TrainingFault>(m, "TrainingFault", PyExc_ArithmeticError);

  // Topology.
  py::class_<topology::BlockSpec>(m, "BlockSpec")
      .def(py::init<>())
      .def_readwrite("num_layers", &topology::BlockSpec::num_layers)
      .def_readwrite("growth_rate", &topology::BlockSpec::growth_rate)
      .def_readwrite("input_channels", &topology::BlockSpec::input_channels)
      .def_readwrite("kernel_size", &topology::BlockSpec::kernel_size);
  py::class_<topology::NetworkSpec>(m, "NetworkSpec")
      .def(py::init<>())
      .def_readwrite("num_blocks", &topology::NetworkSpec::num_blocks)
      .def_readwrite("llfe_channels", &topology::NetworkSpec::llfe_channels)
      .def_readwrite("bottleneck_channels", &topology::NetworkSpec::bottleneck_channels)
      .def_readwrite("upscale_factor", &topology::NetworkSpec::upscale_factor)
      .def_readwrite("upsample_channels", &topology::NetworkSpec::upsample_channels)
      .def_readwrite("base", &topology::NetworkSpec::base)
      .def_readwrite("block", &topology::NetworkSpec::block)
      .def("block_spec", &topology::NetworkSpec::block_spec);

  m.def("predecessors", &topology::predecessors, py::arg("layer"), py::arg("base") = 2,
        "Indices a block layer concatenates, descending; 0 is the block input.");
  m.def(
      "block_parameter_count",
      [](const topology::BlockSpec& b, bool dense, int base) {
        return topology::parameter_count(b, dense ? topology::Aggregation::dense : topology::Aggregation::sparse, base);
      },
      py::arg("block"), py::arg("dense") = false, py::arg("base") = 2);
  m.def(
      "network_parameter_count",
      [](const topology::NetworkSpec& s, bool dense) {
        return topology::parameter_count(s, dense ? topology::Aggregation::dense : topology::Aggregation::sparse);
      },
      py::arg("spec"), py::arg("dense") = false);
  m.def("depth_accounting", &topology::depth_accounting, py::arg("spec"));

  // Metrics.
  m.def(
      "psnr", [](const U8Array& a, const U8Array& b) { return metrics::psnr(to_image(a), to_image(b)); },
      py::arg("reference"), py::arg("test"));
  m.def(
      "ssim",
      [](const U8Array& a, const U8Array& b, const std::string& window) {
        return metrics::ssim(to_image(a), to_image(b), metrics::parse_ssim_window(window));
      },
      py::arg("reference"), py::arg("test"), py::arg("window") = "gaussian11");
  m.def(
      "verification_accuracy",
      [](const std::vector<double>& scores, const std::vector<bool>& same) {
        if (scores.size() != same.size()) throw ConfigError("scores and labels differ in length");
        std::vector<metrics::ScoredPair> pairs;
        for (std::size_t i = 0; i < scores.size(); ++i) pairs.push_back({scores[i], same[i]});
        const auto r = metrics::verification_accuracy(pairs);
        return py::make_tuple(r.accuracy, r.threshold);
      },
      py::arg("scores"), py::arg("same_identity"), "Best (accuracy, threshold) over the cosine threshold sweep.");

  // Recognizer loss.
  m.def(
      "arcface_loss",
      [](const F64Array& embeddings, const std::vector<int>& labels, const F64Array& class_weights, double scale,
         double margin) {
        const auto w = to_tensor(class_weights);
        if (w.rank() != 2) throw ShapeError("class_weights must be (d, K)");
        recognizer::ArcFaceConfig cfg;
        cfg.scale = scale;
        cfg.margin = margin;
        cfg.embedding_dim = static_cast<int>(w.dim(0));
        cfg.num_classes = static_cast<int>(w.dim(1));
        ag::NoGradGuard no_grad;
        return ag::value_of(
            recognizer::arcface_loss(ag::constant(to_tensor(embeddings)), labels, ag::constant(w), cfg));
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("class_weights"), py::arg("scale") = 64.0,
      py::arg("margin") = 0.5, "Mean additive angular margin loss; embeddings are unit rows (N, d).");

  // Data.
  m.def(
      "upsample_bilinear",
      [](const U8Array& image, int factor) {
        return to_array(to_image8(data::upsample_bilinear(to_model_range(to_image(image)), factor)));
      },
      py::arg("image"), py::arg("factor") = 4);
  m.def(
      "synth_toy_dataset",
      [](const std::filesystem::path& out_dir, int identities, int images, int test, std::uint64_t seed) {
        data::SynthOptions o;
        o.num_identities = identities;
        o.images_per_identity = images;
        o.test_per_identity = test;
        o.seed = seed;
        const auto manifest = data::synth_toy_dataset(o, out_dir);
        std::vector<py::tuple> rows;
        for (const auto& r : manifest.records)
          rows.push_back(py::make_tuple(r.image_path, r.identity_id, data::to_string(r.split)));
        return rows;
      },
      py::arg("out_dir"), py::arg("identities") = 4, py::arg("images") = 3, py::arg("test") = 0,
      py::arg("seed") = 0, "Writes the toy dataset and returns (path, identity, split) rows.");

  // Configuration and training.
  m.def("config_keys", [] {
    std::vector<py::tuple> out;
    for (const auto& k : RunConfig::keys()) out.push_back(py::make_tuple(k.name, k.default_value, k.doc));
    return out;
  });
  m.def("train_phase", &train_phase, py::arg("config_text"), py::arg("phase"), py::arg("out_checkpoint"),
        py::arg("checkpoint") = py::none(), "Runs one training phase and returns its JSON step records.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("hallucinate", &Model::hallucinate, py::arg("lr"), "Upscales an (h, w, 3) uint8 image.")
      .def("embed", &Model::embed, py::arg("image"), "Unit identity embedding of an (H, W, 3) uint8 image.")
      .def_property_readonly("upscale_factor", &Model::upscale_factor)
      .def_property_readonly("embedding_dim", &Model::embedding_dim);
}
