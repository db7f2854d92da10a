#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "usgan/cli.hpp"
#include "usgan/evaluation.hpp"
#include "usgan/image_io.hpp"
#include "usgan/param_io.hpp"
#include "usgan/training.hpp"

using namespace usgan;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "usgan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// A small corpus shared by the tests of this suite.
const fs::path& corpus() {
  static const fs::path dir = [] {
    auto d = usgan::test::temp_dir("cli_corpus");
    REQUIRE(run({"make-toy-data", "--identities", "3", "--classes", "7", "--size", "32", "--out",
                 d.string()})
                .code == 0);
    return d;
  }();
  return dir;
}

fs::path identity_checkpoint(const fs::path& dir) {
  TrainConfig cfg;
  cfg.model.image_size = 32;
  cfg.model.base_channels = 4;
  cfg.model.discriminator_layers = 3;
  auto s = TrainState::initialize(cfg);
  zero_output_layer(s.generator);
  save_checkpoint(dir / "identity.ckpt", s);
  return dir / "identity.ckpt";
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help exits 0 and documents flags with defaults") {
    const auto top = run({"--help"});
    CHECK(top.code == 0);
    CHECK(top.out.find("make-toy-data") != std::string::npos);
    for (const char* sub : {"make-toy-data", "train", "synth", "eval", "train-classifier", "default-config"}) {
      const auto r = run({sub, "--help"});
      CHECK(r.code == 0);
      CHECK(r.out.find("--help") != std::string::npos);
    }
    CHECK(run({"make-toy-data", "--help"}).out.find("[100]") != std::string::npos);
    const auto cfg = run({"default-config"});
    CHECK(cfg.code == 0);
    CHECK(cfg.out.find("# Adam step size (default 1e-04)") != std::string::npos);
  }

  TEST_CASE("usage errors exit 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"make-toy-data", "--identities", "0", "--out", "x"}).code == 2);
    CHECK(run({"train", "--config", "/nonexistent/run.cfg"}).code == 2);
    CHECK(run({"synth", "--checkpoint", "/nonexistent.ckpt", "--out", "x", "a.png"}).code == 2);
  }

  TEST_CASE("make-toy-data reports counts and is reproducible") {
    const auto d = usgan::test::temp_dir("cli_toy");
    const auto r = run({"make-toy-data", "--identities", "2", "--classes", "3", "--size", "16",
                        "--out", (d / "a").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("wrote 6 images") != std::string::npos);
    CHECK(r.out.find("1 happy: 2") != std::string::npos);
    run({"make-toy-data", "--identities", "2", "--classes", "3", "--size", "16", "--out",
         (d / "b").string()});
    CHECK(file_hash(d / "a" / "identity_1" / "expr_2.png") == file_hash(d / "b" / "identity_1" / "expr_2.png"));
    fs::remove_all(d);
  }

  TEST_CASE("train: config echo, zero epochs, overrides, config errors, divergence") {
    const auto d = usgan::test::temp_dir("cli_train");
    const std::string text = "# toy\nmanifest = " + (corpus() / "manifest.csv").string() +
                             "\nimage_size = 32\nbase_channels = 4\ndiscriminator_layers = 3\n"
                             "batch_size = 4\nn_critic = 1\nepochs = 0\nlog_every = 0\n";
    std::ofstream(d / "run.cfg") << text;
    auto r = run({"train", "--config", (d / "run.cfg").string(), "--out", (d / "r0").string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(read_text(d / "r0" / "run.cfg") == text);
    CHECK(fs::exists(d / "r0" / "effective.cfg"));
    CHECK(fs::exists(d / "r0" / "test_manifest.csv"));
    CHECK(load_checkpoint(d / "r0" / "final.ckpt").global_step == 0);
    CHECK_FALSE(fs::exists(d / "r0" / "checkpoints" / "step_1.ckpt"));

    // Reference-width generator: only the parameter count matters here.
    std::ofstream(d / "wide.cfg") << "manifest = " << (corpus() / "manifest.csv").string()
                                  << "\nimage_size = 32\ndiscriminator_layers = 4\nbatch_size = 4\nepochs = 0\n";
    r = run({"train", "--config", (d / "wide.cfg").string(), "--residual-blocks", "6",
             "--no-ultimate-skip", "--out", (d / "r6").string()});
    REQUIRE(r.code == 0);
    const auto s6 = load_checkpoint(d / "r6" / "final.ckpt");
    CHECK(count_parameters(s6.generator) == 8440515);
    CHECK_FALSE(s6.config.model.use_ultimate_skip);

    r = run({"train", "--config", (d / "run.cfg").string(), "--epochs", "1", "--max-steps", "2",
             "--out", (d / "r1").string()});
    CHECK(r.code == 0);
    CHECK(load_checkpoint(d / "r1" / "final.ckpt").global_step == 2);

    std::ofstream(d / "bad.cfg") << text << "colour = blue\n";
    r = run({"train", "--config", (d / "bad.cfg").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("colour") != std::string::npos);

    std::ofstream(d / "boom.cfg") << text << "learning_rate = 1e37\nmax_steps = 30\n";
    r = run({"train", "--config", (d / "boom.cfg").string(), "--epochs", "50", "--out",
             (d / "boom").string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("crash.ckpt") != std::string::npos);
    CHECK(fs::exists(d / "boom" / "crash.ckpt"));
    fs::remove_all(d);
  }

  TEST_CASE("synth: grid layout, identity at init, residual grid") {
    const auto d = usgan::test::temp_dir("cli_synth");
    const auto ckpt = identity_checkpoint(d);
    const auto input = corpus() / "identity_0" / "expr_1.png";
    auto r = run({"synth", "--checkpoint", ckpt.string(), "--out", (d / "o").string(), input.string()});
    REQUIRE(r.code == 0);
    const auto grid = read_png(d / "o" / "grid.png");
    CHECK(grid.width == 8 * 32);
    CHECK(grid.height == 32);
    const auto src = read_png(input);
    for (int64_t col = 0; col < 8; ++col)
      for (int64_t y = 0; y < 32; ++y)
        for (int64_t x = 0; x < 32; ++x)
          REQUIRE(std::equal(src.at(x, y), src.at(x, y) + 3, grid.at(col * 32 + x, y)));
    CHECK_FALSE(fs::exists(d / "o" / "residuals.png"));

    r = run({"synth", "--checkpoint", ckpt.string(), "--residuals", "--out", (d / "o2").string(),
             input.string(), (corpus() / "identity_1" / "expr_0.png").string()});
    REQUIRE(r.code == 0);
    CHECK(read_png(d / "o2" / "grid.png").height == 64);
    CHECK(fs::exists(d / "o2" / "residuals.png"));
    CHECK(run({"synth", "--checkpoint", ckpt.string(), "--out", (d / "o3").string(), "/no/such.png"}).code == 2);
    fs::remove_all(d);
  }

  TEST_CASE("eval: identity model has zero ACD; verification and strict mode") {
    const auto d = usgan::test::temp_dir("cli_eval");
    const auto ckpt = identity_checkpoint(d);
    const auto manifest = (corpus() / "manifest.csv").string();
    auto r = run({"eval", "--checkpoint", ckpt.string(), "--manifest", manifest, "--limit", "4",
                  "--out", (d / "e").string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto rows = read_text(d / "e" / "eval.tsv");
    std::istringstream is(rows);
    std::string line;
    std::getline(is, line);
    CHECK(line == "image\tsource\ttarget\tacd\tdrift\tfvs\tpredicted");
    int n = 0;
    while (std::getline(is, line)) {
      ++n;
      std::istringstream ls(line);
      std::string img, src, tgt, acd;
      std::getline(ls, img, '\t');
      std::getline(ls, src, '\t');
      std::getline(ls, tgt, '\t');
      std::getline(ls, acd, '\t');
      CHECK(acd == "0.000000");
    }
    CHECK(n == 4 * 6);
    CHECK(read_text(d / "e" / "summary.tsv").find("acd\t0.000000 ± 0.000000\t24") != std::string::npos);

    MockVerificationServer server(std::make_shared<PixelStatsEmbedder>(), "tok");
    const int port = server.start();
    ::setenv("USGAN_VERIFY_TOKEN", "tok", 1);
    r = run({"eval", "--checkpoint", ckpt.string(), "--manifest", manifest, "--limit", "2",
             "--verify-host", "127.0.0.1", "--verify-port", std::to_string(port), "--out",
             (d / "v").string()});
    ::unsetenv("USGAN_VERIFY_TOKEN");
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(read_text(d / "v" / "summary.tsv").find("fvs\t100.000000 ± 0.000000\t12") != std::string::npos);
    server.stop();

    r = run({"eval", "--checkpoint", ckpt.string(), "--manifest", manifest, "--limit", "1",
             "--verify-host", "127.0.0.1", "--verify-port", std::to_string(port),
             "--verify-timeout", "1", "--out", (d / "w").string()});
    CHECK(r.code == 0);
    CHECK(r.err.find("warning") != std::string::npos);
    r = run({"eval", "--checkpoint", ckpt.string(), "--manifest", manifest, "--limit", "1",
             "--verify-host", "127.0.0.1", "--verify-port", std::to_string(port),
             "--verify-timeout", "1", "--strict", "--out", (d / "s").string()});
    CHECK(r.code == 1);
    fs::remove_all(d);
  }
}
