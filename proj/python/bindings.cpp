#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "usgan/cli.hpp"
#include "usgan/data.hpp"
#include "usgan/errors.hpp"
#include "usgan/evaluation.hpp"
#include "usgan/objectives.hpp"
#include "usgan/param_io.hpp"
#include "usgan/training.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace usgan;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// (N, H, W, 3) or (H, W, 3) float array -> (N, 3, H, W) tensor owning its data.
torch::Tensor from_nhwc(const FloatArray& a, bool& batched) {
  if (a.ndim() != 3 && a.ndim() != 4) throw DimensionError("expected an (H, W, 3) or (N, H, W, 3) array");
  batched = a.ndim() == 4;
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  if (!batched) shape.insert(shape.begin(), 1);
  if (shape[3] != 3) throw DimensionError("last axis must hold 3 channels");
  auto t = torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
  return t.permute({0, 3, 1, 2}).contiguous();
}

FloatArray to_nhwc(const torch::Tensor& t, bool batched) {
  auto hwc = t.detach().to(torch::kFloat32).permute({0, 2, 3, 1}).contiguous();
  if (!batched) hwc = hwc.squeeze(0);
  FloatArray out(hwc.sizes().vec());
  std::memcpy(out.mutable_data(), hwc.data_ptr<float>(), sizeof(float) * hwc.numel());
  return out;
}

torch::Tensor single_image(const FloatArray& a) {
  bool batched = false;
  auto t = from_nhwc(a, batched);
  if (batched) throw DimensionError("expected a single (H, W, 3) image");
  return t.squeeze(0);
}

struct Generator {
  ModelConfig config;
  GeneratorParams params;

  static Generator load(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path.string(), "cannot open");
    char magic[8] = {};
    is.read(magic, 8);
    is.close();
    if (std::string(magic, 8) == "USGANCKP") {
      auto state = load_checkpoint(path);
      return {state.config.model, std::move(state.generator)};
    }
    auto p = load_params(path);
    if (p.kind != ParamKind::generator) throw FormatError(path.string() + ": not generator parameters");
    Generator g{p.config, {}};
    static_cast<ParamSet&>(g.params) = std::move(p.params);
    return g;
  }

  // Returns (synthesized, residual) with the input layout.
  std::pair<FloatArray, FloatArray> synthesize(const FloatArray& images, const std::vector<int64_t>& targets) const {
    bool batched = false;
    const auto x = from_nhwc(images, batched);
    if (static_cast<int64_t>(targets.size()) != x.size(0))
      throw DimensionError("one target class per image is required");
    for (auto t : targets)
      if (t < 0 || t >= config.num_classes) throw ValidationError("target class out of range");
    torch::NoGradGuard ng;
    const auto labels = usgan::one_hot(torch::tensor(targets, torch::kInt64), config.num_classes);
    const auto out = generator_forward(params, x, labels, config);
    return {to_nhwc(out.output, batched), to_nhwc(out.residual, batched)};
  }
};

}  // namespace

PYBIND11_MODULE(_usgan, m) {
  m.doc() = "Expression-synthesis GAN core";
  torch::set_num_threads(1);

  auto base = py::register_exception<Error>(m, "UsganError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", numerical.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("image_size", &ModelConfig::image_size)
      .def_readwrite("num_classes", &ModelConfig::num_classes)
      .def_readwrite("base_channels", &ModelConfig::base_channels)
      .def_readwrite("num_residual_blocks", &ModelConfig::num_residual_blocks)
      .def_readwrite("use_ultimate_skip", &ModelConfig::use_ultimate_skip)
      .def_readwrite("discriminator_layers", &ModelConfig::discriminator_layers)
      .def("validate", &ModelConfig::validate)
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; });

  py::class_<Generator>(m, "Generator")
      .def(py::init([](const ModelConfig& c, uint64_t seed) { return Generator{c, build_generator(c, seed)}; }),
           py::arg("config"), py::arg("seed") = 0)
      .def_static("load", &Generator::load, py::arg("path"),
                  "Loads a training checkpoint or a standalone generator parameter file.")
      .def_readonly("config", &Generator::config)
      .def_property_readonly("num_parameters", [](const Generator& g) { return count_parameters(g.params); })
      .def("zero_output_layer", [](Generator& g) { zero_output_layer(g.params); })
      .def("save", [](const Generator& g, const fs::path& p) { save_params(p, ParamKind::generator, g.config, g.params); })
      .def("synthesize", &Generator::synthesize, py::arg("images"), py::arg("targets"),
           "images: float32 (N, D, D, 3) or (D, D, 3) in [-1, 1]. Returns (output, residual).");

  m.def("generator_parameter_count", [](const ModelConfig& c) { return count_parameters(build_generator(c, 0)); });

  m.def("load_image", [](const fs::path& p, int64_t size) { return to_nhwc(load_image(p, size).unsqueeze(0), false); },
        py::arg("path"), py::arg("size"), "PNG -> (size, size, 3) float32 in [-1, 1].");
  m.def("save_image", [](const fs::path& p, const FloatArray& img) { write_png(p, to_rgb8(single_image(img))); },
        py::arg("path"), py::arg("image"));

  m.def("acd", [](const FloatArray& x, const FloatArray& y, int64_t thumb) {
          return acd(PixelStatsEmbedder(thumb), single_image(x), single_image(y));
        }, py::arg("x"), py::arg("y"), py::arg("thumb") = 4,
        "Squared L2 distance between pixel-statistics embeddings.");
  m.def("identity_drift", [](const FloatArray& x, const FloatArray& y) {
          return identity_drift(single_image(x), single_image(y));
        }, py::arg("x"), py::arg("y"));
  m.def("mock_similarity", [](const FloatArray& x, const FloatArray& y, int64_t thumb) {
          return mock_similarity(PixelStatsEmbedder(thumb), single_image(x), single_image(y));
        }, py::arg("x"), py::arg("y"), py::arg("thumb") = 4);

  m.def("classification_loss", [](const std::vector<std::vector<double>>& logits, const std::vector<int64_t>& ids) {
          if (logits.empty()) throw ValidationError("no logits");
          const auto c = static_cast<int64_t>(logits.front().size());
          std::vector<double> flat;
          for (const auto& row : logits) {
            if (static_cast<int64_t>(row.size()) != c) throw DimensionError("ragged logits");
            flat.insert(flat.end(), row.begin(), row.end());
          }
          const auto t = torch::tensor(flat, torch::kFloat64).view({-1, c});
          return classification_loss(t, usgan::one_hot(torch::tensor(ids, torch::kInt64), c, torch::kFloat64))
              .item<double>();
        }, py::arg("logits"), py::arg("class_ids"));

  m.def("make_toy_corpus", [](const fs::path& out, int64_t identities, int64_t classes, int64_t size, uint64_t seed) {
          return static_cast<int64_t>(generate_toy_corpus(SpriteSpec{size, classes, seed}, identities, out).records.size());
        }, py::arg("out_dir"), py::arg("identities") = 100, py::arg("classes") = 7, py::arg("size") = 64,
        py::arg("seed") = 0, "Renders the sprite corpus; returns the number of images written.");

  m.def("file_hash", [](const fs::path& p) { return hex64(file_hash(p)); });

  m.def("run_cli", [](const std::vector<std::string>& args) {
          std::vector<const char*> argv{"usgan"};
          for (const auto& a : args) argv.push_back(a.c_str());
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        }, py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
