#include "usgan/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "usgan/data.hpp"
#include "usgan/errors.hpp"
#include "usgan/evaluation.hpp"
#include "usgan/image_io.hpp"
#include "usgan/param_io.hpp"
#include "usgan/report.hpp"
#include "usgan/run_config.hpp"
#include "usgan/training.hpp"

namespace usgan::cli {

namespace fs = std::filesystem;

namespace {

/// Environment variable holding the verification bearer token.
constexpr const char* kTokenEnv = "USGAN_VERIFY_TOKEN";

// Raised for conditions that map to the usage exit code.
struct UsageError : Error {
  using Error::Error;
};

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string(), "cannot open");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os || !(os << text) || !os.flush()) throw IoError(path.string(), "cannot write");
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
}

DatasetManifest absolute_paths(DatasetManifest m) {
  for (auto& r : m.records) r.image_path = fs::absolute(m.resolve(r)).lexically_normal().string();
  m.base_dir.clear();
  return m;
}

/// Generator (and critic when available) from a training checkpoint or a
/// standalone parameter file.
struct LoadedModel {
  ModelConfig config;
  GeneratorParams generator;
  std::optional<DiscriminatorParams> discriminator;
};

LoadedModel load_model(const fs::path& path) {
  if (!fs::exists(path)) throw IoError(path.string(), "no such checkpoint");
  std::ifstream is(path, std::ios::binary);
  char magic[8] = {};
  is.read(magic, 8);
  LoadedModel m;
  if (std::string(magic, 8) == "USGANCKP") {
    auto state = load_checkpoint(path);
    m.config = state.config.model;
    m.generator = std::move(state.generator);
    m.discriminator = std::move(state.discriminator);
    return m;
  }
  auto p = load_params(path);
  if (p.kind != ParamKind::generator)
    throw FormatError(path.string() + ": expected generator parameters");
  m.config = p.config;
  static_cast<ParamSet&>(m.generator) = std::move(p.params);
  return m;
}

// ---------------------------------------------------------------------------

struct ToyArgs {
  int64_t identities = 100;
  int64_t classes = 7;
  int64_t size = 64;
  uint64_t seed = 0;
  std::string out;
};

int cmd_make_toy_data(const ToyArgs& a, std::ostream& out) {
  SpriteSpec spec;
  spec.image_size = a.size;
  spec.num_classes = a.classes;
  spec.seed = a.seed;
  const auto manifest = generate_toy_corpus(spec, a.identities, a.out);
  std::vector<int64_t> counts(static_cast<std::size_t>(manifest.num_classes()), 0);
  for (const auto& r : manifest.records) ++counts[static_cast<std::size_t>(r.expression_id)];
  out << "wrote " << manifest.records.size() << " images of " << a.identities << " identities to "
      << a.out << "\n";
  for (std::size_t c = 0; c < counts.size(); ++c)
    out << "  " << c << " " << manifest.class_names[c] << ": " << counts[c] << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  bool no_skip = false;
  std::optional<int64_t> residual_blocks, epochs, max_steps;
  std::optional<uint64_t> seed;
  std::string out;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path config_path = a.config;
  const auto text = slurp(config_path);
  RunConfig rc;
  try {
    rc = parse_run_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(config_path.string() + ": " + e.what());
  }
  if (a.no_skip) rc.train.model.use_ultimate_skip = false;
  if (a.residual_blocks) rc.train.model.num_residual_blocks = *a.residual_blocks;
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.max_steps) rc.train.max_steps = *a.max_steps;
  if (a.seed) rc.train.seed = *a.seed;
  if (!a.out.empty()) rc.out_dir = a.out;
  rc.validate();
  if (rc.manifest.empty()) throw ConfigError("the run config does not name a manifest");

  fs::path manifest_path = rc.manifest;
  if (manifest_path.is_relative()) manifest_path = config_path.parent_path() / manifest_path;
  const auto manifest = read_manifest(manifest_path);
  const fs::path run_dir = rc.out_dir;
  make_dirs(run_dir);
  spit(run_dir / "run.cfg", text);
  spit(run_dir / "effective.cfg", format_run_config(rc));

  auto [train_m, test_m] = split(manifest, rc.train_fraction, rc.split_seed, rc.split_mode);
  write_manifest(run_dir / "train_manifest.csv", absolute_paths(train_m));
  write_manifest(run_dir / "test_manifest.csv", absolute_paths(test_m));
  const auto data = load_dataset(train_m, rc.train.model.image_size);
  out << "training on " << data.size() << " images (" << test_m.records.size()
      << " held out) into " << run_dir.string() << "\n";

  TrainOptions opts;
  opts.out_dir = run_dir;
  opts.on_log = [&out](const LogRecord& r) {
    out << "step " << r.step << " epoch " << r.epoch << " L_D " << r.critic.total_d << " L_G "
        << r.generator.total_g << " rec " << r.generator.rec << " cls " << r.critic.cls_real
        << "\n"
        << std::flush;
  };
  try {
    const auto state = train(rc.train, data, opts);
    out << "finished at step " << state.global_step << "; generator parameters "
        << count_parameters(state.generator) << "; checkpoint "
        << (run_dir / "final.ckpt").string() << "\n";
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    if (!e.checkpoint_path().empty()) err << "crash checkpoint: " << e.checkpoint_path() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

struct SynthArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string out;
  bool residuals = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto model = load_model(a.checkpoint);
  const auto& cfg = model.config;
  for (const auto& p : a.inputs)
    if (!fs::exists(p)) throw IoError(p, "no such input image");

  torch::NoGradGuard no_grad;
  const int64_t C = cfg.num_classes;
  const auto labels = usgan::one_hot(torch::arange(C, torch::kInt64), C);
  std::vector<std::vector<torch::Tensor>> grid, residual_grid;
  for (const auto& p : a.inputs) {
    const auto x = load_image(p, cfg.image_size);
    const auto xs = x.unsqueeze(0).expand({C, -1, -1, -1});
    const auto g = generator_forward(model.generator, xs, labels, cfg);
    std::vector<torch::Tensor> row{x}, rrow{x};
    for (int64_t c = 0; c < C; ++c) {
      row.push_back(g.output[c]);
      rrow.push_back(g.residual[c]);
    }
    grid.push_back(std::move(row));
    residual_grid.push_back(std::move(rrow));
  }
  make_dirs(a.out);
  const auto grid_path = fs::path(a.out) / "grid.png";
  write_png(grid_path, to_rgb8(tile_images(grid)));
  out << "wrote " << grid_path.string() << "\n";
  if (a.residuals) {
    const auto res_path = fs::path(a.out) / "residuals.png";
    write_png(res_path, to_rgb8(tile_images(residual_grid)));
    out << "wrote " << res_path.string() << "\n";
  }
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string classifier;
  std::string out;
  int64_t thumb = 4;
  int64_t limit = 0;
  bool all_targets = false;
  std::string verify_host;
  int verify_port = 8080;
  std::string verify_path = "/verify";
  double verify_timeout = 10.0;
  bool strict = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto model = load_model(a.checkpoint);
  const auto& cfg = model.config;
  auto manifest = read_manifest(a.manifest);
  if (a.limit > 0 && static_cast<std::size_t>(a.limit) < manifest.records.size())
    manifest.records.resize(static_cast<std::size_t>(a.limit));
  if (manifest.num_classes() != cfg.num_classes)
    throw ConfigError("manifest has " + std::to_string(manifest.num_classes()) +
                      " classes, model expects " + std::to_string(cfg.num_classes));
  const auto data = load_dataset(manifest, cfg.image_size);

  ExpressionClassifier classifier;
  std::string classifier_name = "none";
  if (!a.classifier.empty()) {
    auto p = load_params(a.classifier);
    if (p.kind != ParamKind::discriminator)
      throw FormatError(a.classifier + ": expected classifier (critic) parameters");
    DiscriminatorParams d;
    static_cast<ParamSet&>(d) = std::move(p.params);
    classifier = critic_classifier(std::move(d), p.config);
    classifier_name = a.classifier;
  } else if (model.discriminator) {
    classifier = critic_classifier(*model.discriminator, cfg);
    classifier_name = "checkpoint critic";
  }

  std::unique_ptr<HttpVerificationClient> verifier;
  if (!a.verify_host.empty()) {
    HttpVerificationConfig vc;
    vc.host = a.verify_host;
    vc.port = a.verify_port;
    vc.path = a.verify_path;
    vc.timeout_seconds = a.verify_timeout;
    if (const char* tok = std::getenv(kTokenEnv)) vc.token = tok;
    verifier = std::make_unique<HttpVerificationClient>(vc);
    try {
      verification_score(*verifier, data.images[0], data.images[0]);
    } catch (const TransportError& e) {
      if (a.strict) throw;
      err << "warning: verification endpoint unreachable, skipping FVS: " << e.what() << "\n";
      verifier.reset();
    }
  }

  const PixelStatsEmbedder embedder(a.thumb);
  EvalInputs in;
  in.generator = &model.generator;
  in.config = cfg;
  in.images = data.images;
  in.labels = data.labels;
  for (const auto& r : manifest.records) in.names.push_back(r.image_path);
  in.embedder = &embedder;
  in.classifier = classifier ? &classifier : nullptr;
  in.verifier = verifier.get();
  in.include_source_class = a.all_targets;
  const auto rows = evaluate_synthesis(in);
  const auto summary = summarize(rows);

  make_dirs(a.out);
  spit(fs::path(a.out) / "eval.tsv", format_eval_rows(rows));
  const auto text = format_eval_summary(summary);
  spit(fs::path(a.out) / "summary.tsv", text);
  out << "embedder " << embedder.name() << " v" << embedder.version() << "; classifier "
      << classifier_name << "\n"
      << text;
  return kExitOk;
}

struct ClassifierArgs {
  std::string manifest;
  std::string out;
  int64_t size = 64;
  int64_t base_channels = 16;
  int64_t layers = 4;
  int64_t steps = 600;
  int64_t batch_size = 16;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
};

int cmd_train_classifier(const ClassifierArgs& a, std::ostream& out) {
  const auto manifest = read_manifest(a.manifest);
  ModelConfig cfg;
  cfg.image_size = a.size;
  cfg.num_classes = manifest.num_classes();
  cfg.base_channels = a.base_channels;
  cfg.discriminator_layers = a.layers;
  cfg.validate();
  const auto data = load_dataset(manifest, a.size);
  const auto params =
      train_expression_classifier(data, cfg, a.seed, a.steps, a.batch_size, a.learning_rate);
  const double acc = expression_accuracy(critic_classifier(params, cfg), data.images, data.labels);
  save_params(a.out, ParamKind::discriminator, cfg, params);
  out << "training accuracy " << acc << "; wrote " << a.out << "\n";
  return kExitOk;
}

int cmd_default_config(std::ostream& out) {
  out << format_run_config(RunConfig{});
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"US-GAN facial expression synthesis toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  ToyArgs toy;
  auto* c_toy = app.add_subcommand("make-toy-data", "Render a labelled sprite-face corpus");
  c_toy->add_option("--identities", toy.identities, "Number of identities")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_toy->add_option("--classes", toy.classes, "Expression classes (2..7)")
      ->check(CLI::Range(2, 7))
      ->capture_default_str();
  c_toy->add_option("--size", toy.size, "Image side in pixels")
      ->check(CLI::Range(8, 4096))
      ->capture_default_str();
  c_toy->add_option("--seed", toy.seed, "Corpus seed")->capture_default_str();
  c_toy->add_option("--out", toy.out, "Output directory")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model from a run config");
  c_train->add_option("--config", tr.config, "Run config file (see default-config)")->required();
  c_train->add_flag("--no-ultimate-skip", tr.no_skip, "Disable the input-to-output skip");
  c_train->add_option("--residual-blocks", tr.residual_blocks, "Override residual_blocks")
      ->check(CLI::NonNegativeNumber);
  c_train->add_option("--epochs", tr.epochs, "Override epochs")->check(CLI::NonNegativeNumber);
  c_train->add_option("--max-steps", tr.max_steps, "Override max_steps")
      ->check(CLI::NonNegativeNumber);
  c_train->add_option("--seed", tr.seed, "Override seed");
  c_train->add_option("--out", tr.out, "Override out_dir");

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "Synthesize every expression for input images");
  c_synth->add_option("--checkpoint", sy.checkpoint, "Training checkpoint or generator file")
      ->required();
  c_synth->add_option("inputs", sy.inputs, "Input PNG images")->required();
  c_synth->add_option("--out", sy.out, "Output directory")->required();
  c_synth->add_flag("--residuals", sy.residuals, "Also write the residual grid");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Identity and expression metrics over a manifest");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Training checkpoint or generator file")
      ->required();
  c_eval->add_option("--manifest", ev.manifest, "Test manifest")->required();
  c_eval->add_option("--out", ev.out, "Output directory")->required();
  c_eval->add_option("--classifier", ev.classifier,
                     "Classifier file from train-classifier (default: checkpoint critic)");
  c_eval->add_option("--thumb", ev.thumb, "Embedder thumbnail side")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_eval->add_option("--limit", ev.limit, "Use only the first N records (0: all)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_eval->add_flag("--all-targets", ev.all_targets, "Include the source class as a target");
  c_eval->add_option("--verify-host", ev.verify_host,
                     std::string("Verification endpoint host (token from $") + kTokenEnv + ")");
  c_eval->add_option("--verify-port", ev.verify_port, "Verification endpoint port")
      ->capture_default_str();
  c_eval->add_option("--verify-path", ev.verify_path, "Verification endpoint path")
      ->capture_default_str();
  c_eval->add_option("--verify-timeout", ev.verify_timeout, "Verification timeout in seconds")
      ->capture_default_str();
  c_eval->add_flag("--strict", ev.strict, "Fail instead of skipping an unreachable endpoint");

  ClassifierArgs cl;
  auto* c_cls = app.add_subcommand("train-classifier", "Train a standalone expression classifier");
  c_cls->add_option("--manifest", cl.manifest, "Training manifest")->required();
  c_cls->add_option("--out", cl.out, "Output parameter file")->required();
  c_cls->add_option("--size", cl.size, "Image side")->capture_default_str();
  c_cls->add_option("--base-channels", cl.base_channels, "First layer width")->capture_default_str();
  c_cls->add_option("--layers", cl.layers, "Stride-2 layers")->capture_default_str();
  c_cls->add_option("--steps", cl.steps, "Optimizer steps")->capture_default_str();
  c_cls->add_option("--batch-size", cl.batch_size, "Batch size")->capture_default_str();
  c_cls->add_option("--learning-rate", cl.learning_rate, "Adam step size")->capture_default_str();
  c_cls->add_option("--seed", cl.seed, "Seed")->capture_default_str();

  auto* c_cfg = app.add_subcommand("default-config", "Print a documented run config with defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand --help surfaces as CallForHelp from the subcommand itself.
    if (e.get_exit_code() == 0) {
      for (auto* sub : app.get_subcommands()) out << sub->help();
      if (app.get_subcommands().empty()) out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (c_toy->parsed()) return cmd_make_toy_data(toy, out);
    if (c_train->parsed()) return cmd_train(tr, out, err);
    if (c_synth->parsed()) return cmd_synth(sy, out);
    if (c_eval->parsed()) return cmd_eval(ev, out, err);
    if (c_cls->parsed()) return cmd_train_classifier(cl, out);
    if (c_cfg->parsed()) return cmd_default_config(out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace usgan::cli
