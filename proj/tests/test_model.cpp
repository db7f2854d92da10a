#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "usgan/errors.hpp"
#include "usgan/param_io.hpp"

using namespace usgan;
using usgan::test::labels_of;
using usgan::test::random_images;

namespace {

int64_t conv_count(int64_t in, int64_t out, int64_t k) { return in * out * k * k + out; }

int64_t expected_generator_count(int64_t c, int64_t b, int64_t r) {
  const int64_t norms = 2 * b + 2 * 2 * b + 2 * 4 * b + 2 * 2 * b + 2 * b;
  const int64_t block = 2 * conv_count(4 * b, 4 * b, 3) + 2 * 2 * 4 * b;
  return conv_count(3 + c, b, 7) + conv_count(b, 2 * b, 4) + conv_count(2 * b, 4 * b, 4) +
         r * block + conv_count(4 * b, 2 * b, 4) + conv_count(2 * b, b, 4) + conv_count(b, 3, 7) +
         norms;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("generator parameter counts match the per-layer formula") {
    ModelConfig cfg;
    CHECK(count_parameters(build_generator(cfg, 0)) == expected_generator_count(7, 64, 1));
    CHECK(count_parameters(build_generator(cfg, 0)) == 2534595);
    cfg.num_residual_blocks = 6;
    const auto r6 = count_parameters(build_generator(cfg, 0));
    CHECK(r6 == expected_generator_count(7, 64, 6));
    CHECK(r6 - 2534595 == 5 * (2 * 256 * 256 * 9 + 2 * 256 + 4 * 256));
    CHECK(count_parameters(ParamSet{}) == 0);
  }

  TEST_CASE("residual block holds two 3x3 convolutions of 256 channels") {
    const auto g = build_generator(ModelConfig{}, 0);
    CHECK(g.at("res0.conv1.weight").sizes() == torch::IntArrayRef({256, 256, 3, 3}));
    CHECK(g.at("res0.conv2.weight").sizes() == torch::IntArrayRef({256, 256, 3, 3}));
    CHECK(g.at("enc1.weight").sizes() == torch::IntArrayRef({64, 10, 7, 7}));
    CHECK(g.at("dec1.weight").sizes() == torch::IntArrayRef({256, 128, 4, 4}));
    CHECK(g.at("out.weight").sizes() == torch::IntArrayRef({3, 64, 7, 7}));
  }

  TEST_CASE("critic layout: six doubling trunk layers, 3x3 realism head, class head spans the trunk") {
    const auto d = build_discriminator(ModelConfig{}, 0);
    int64_t ch = 3;
    for (int i = 0; i < 6; ++i) {
      const auto& w = d.at("trunk" + std::to_string(i) + ".weight");
      CHECK(w.sizes() == torch::IntArrayRef({int64_t{64} << i, ch, 4, 4}));
      ch = int64_t{64} << i;
    }
    CHECK(d.at("realism.weight").sizes() == torch::IntArrayRef({1, 2048, 3, 3}));
    CHECK(d.at("class.weight").sizes() == torch::IntArrayRef({7, 2048, 2, 2}));
  }

  TEST_CASE("initialization is seeded and fan-in scaled") {
    ModelConfig cfg;
    const auto a = build_generator(cfg, 5), b = build_generator(cfg, 5), c = build_generator(cfg, 6);
    CHECK(a.identical(b));
    CHECK_FALSE(a.identical(c));
    const double sd = a.at("enc3.weight").std().item<double>();
    CHECK(sd == doctest::Approx(1.0 / std::sqrt(128.0 * 16.0)).epsilon(0.02));
    const double sd_dec = a.at("dec1.weight").std().item<double>();
    CHECK(sd_dec == doctest::Approx(1.0 / std::sqrt(256.0 * 4.0)).epsilon(0.02));
    CHECK(a.at("enc1.norm.weight").eq(1).all().item<bool>());
    CHECK(a.at("enc1.norm.bias").eq(0).all().item<bool>());
    CHECK(a.at("enc1.bias").eq(0).all().item<bool>());
  }

  TEST_CASE("generator and critic stage shapes at D = 128") {
    ModelConfig cfg;
    torch::NoGradGuard ng;
    const auto g = build_generator(cfg, 1);
    ForwardTrace t;
    const auto out = generator_forward(g, random_images(1, 128, 0), labels_of({3}, 7), cfg, &t);
    const std::vector<std::pair<std::string, std::vector<int64_t>>> want = {
        {"input", {1, 10, 128, 128}}, {"enc1", {1, 64, 128, 128}}, {"enc2", {1, 128, 64, 64}},
        {"enc3", {1, 256, 32, 32}},   {"res0", {1, 256, 32, 32}},  {"dec1", {1, 128, 64, 64}},
        {"dec2", {1, 64, 128, 128}},  {"out", {1, 3, 128, 128}}};
    CHECK((t.stages == want));
    CHECK(out.output.sizes() == torch::IntArrayRef({1, 3, 128, 128}));

    ForwardTrace td;
    const auto d = build_discriminator(cfg, 2);
    const auto co = discriminator_forward(d, random_images(2, 128, 1), cfg, &td);
    REQUIRE(td.stages.size() == 8);
    for (int i = 0; i < 6; ++i)
      CHECK((td.stages[i].second == std::vector<int64_t>{2, int64_t{64} << i, 64 >> i, 64 >> i}));
    CHECK((td.stages[5].second == std::vector<int64_t>{2, 2048, 2, 2}));
    CHECK(co.realism.sizes() == torch::IntArrayRef({2}));
    CHECK(co.class_logits.sizes() == torch::IntArrayRef({2, 7}));
  }

  TEST_CASE("zero output layer gives exact identity with the skip and zeros without it") {
    auto cfg = usgan::test::tiny_config(16, 3);
    auto g = build_generator(cfg, 3);
    zero_output_layer(g);
    const auto x = random_images(4, 16, 7, 1.0);
    const auto c = labels_of({0, 1, 2, 1}, 3);
    auto r = generator_forward(g, x, c, cfg);
    CHECK(torch::equal(r.output, x));
    CHECK(r.residual.eq(0).all().item<bool>());
    cfg.use_ultimate_skip = false;
    r = generator_forward(g, x, c, cfg);
    CHECK(r.output.eq(0).all().item<bool>());
  }

  TEST_CASE("a residual block with zero convolutions is the identity") {
    auto cfg = usgan::test::tiny_config(16, 3);
    auto g1 = build_generator(cfg, 9);
    for (auto& [name, t] : g1.entries())
      if (name.starts_with("res0.conv")) t.zero_();
    auto cfg0 = cfg;
    cfg0.num_residual_blocks = 0;
    GeneratorParams g0;
    for (const auto& [name, t] : g1.entries())
      if (!name.starts_with("res")) g0.add(name, t);
    const auto x = random_images(2, 16, 1);
    const auto c = labels_of({2, 0}, 3);
    CHECK(torch::equal(generator_forward(g1, x, c, cfg).output, generator_forward(g0, x, c, cfg0).output));
  }

  TEST_CASE("label channel permutation with matching enc1 slices leaves the output unchanged") {
    auto cfg = usgan::test::tiny_config(16, 4);
    cfg.use_ultimate_skip = false;
    const auto g = build_generator(cfg, 4);
    const std::vector<int64_t> sigma = {2, 0, 3, 1};
    auto gp = GeneratorParams{g.clone()};
    std::vector<int64_t> idx = {0, 1, 2};
    for (auto s : sigma) idx.push_back(3 + s);
    gp.at("enc1.weight") = g.at("enc1.weight").index_select(1, torch::tensor(idx)).contiguous();
    const auto x = random_images(3, 16, 2);
    const auto c = labels_of({0, 1, 3}, 4);
    const auto c_perm = c.index_select(1, torch::tensor(sigma));
    const auto a = generator_forward(g, x, c, cfg).output;
    const auto b = generator_forward(gp, x, c_perm, cfg).output;
    CHECK(torch::allclose(a, b, 1e-5, 1e-6));
    // Unpermuted weights with permuted labels do change it: the check has teeth.
    CHECK_FALSE(torch::allclose(a, generator_forward(g, x, c_perm, cfg).output, 1e-5, 1e-6));
  }

  TEST_CASE("outputs stay in range for large parameters and forward passes are deterministic") {
    const auto cfg = usgan::test::tiny_config(16, 3);
    auto g = build_generator(cfg, 11);
    for (auto& [n, t] : g.entries()) t.mul_(50);
    const auto x = random_images(2, 16, 3, 1.0);
    const auto c = labels_of({1, 2}, 3);
    const auto a = generator_forward(g, x, c, cfg);
    CHECK(a.output.abs().max().item<float>() <= 1.0f);
    CHECK(a.residual.abs().max().item<float>() <= 1.0f);
    CHECK(torch::equal(a.output, generator_forward(g, x, c, cfg).output));
  }

  TEST_CASE("all-zero critic scores zero") {
    const auto cfg = usgan::test::tiny_config(16, 3);
    const auto out = discriminator_forward(zero_discriminator(cfg), random_images(3, 16, 4), cfg);
    CHECK(out.realism.eq(0).all().item<bool>());
    CHECK(out.class_logits.eq(0).all().item<bool>());
  }

  TEST_CASE("invalid configs and inputs raise typed errors") {
    ModelConfig cfg;
    cfg.image_size = 100;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ModelConfig{};
    cfg.num_classes = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ModelConfig{};
    cfg.num_residual_blocks = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ModelConfig{};
    cfg.base_channels = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    const auto t = usgan::test::tiny_config(16, 3);
    const auto g = build_generator(t, 0);
    const auto x = random_images(2, 16, 0);
    CHECK_THROWS_AS(generator_forward(g, x, labels_of({0}, 3), t), DimensionError);
    CHECK_THROWS_AS(generator_forward(g, random_images(2, 32, 0), labels_of({0, 1}, 3), t),
                    DimensionError);
    CHECK_THROWS_AS(generator_forward(g, x, torch::full({2, 3}, 0.5), t), ValidationError);
    CHECK_THROWS_AS(generator_forward(g, x * 2 + 1.5, labels_of({0, 1}, 3), t), ValidationError);
    auto bad = x.clone();
    bad[0][0][0][0] = std::nanf("");
    CHECK_THROWS_AS(generator_forward(g, bad, labels_of({0, 1}, 3), t), ValidationError);
  }

  TEST_CASE("parameter files round-trip bit-exactly and reject mismatched layouts") {
    const auto dir = usgan::test::temp_dir("params");
    const auto cfg = usgan::test::tiny_config(16, 3);
    const auto g = build_generator(cfg, 12);
    save_params(dir / "g.bin", ParamKind::generator, cfg, g);
    const auto loaded = load_params(dir / "g.bin");
    CHECK(loaded.kind == ParamKind::generator);
    CHECK(loaded.config == cfg);
    CHECK(loaded.params.identical(g));
    save_params(dir / "g2.bin", ParamKind::generator, loaded.config, loaded.params);
    CHECK(file_hash(dir / "g.bin") == file_hash(dir / "g2.bin"));

    // Little-endian header: magic, then version 1 as 01 00 00 00.
    std::ifstream is(dir / "g.bin", std::ios::binary);
    std::string head(12, '\0');
    is.read(head.data(), 12);
    CHECK(head.substr(0, 8) == "USGANPRM");
    CHECK(head.substr(8, 4) == std::string("\x01\x00\x00\x00", 4));

    auto cfg_wide = cfg;
    cfg_wide.base_channels = 5;
    CHECK_THROWS_AS(save_params(dir / "bad.bin", ParamKind::generator, cfg_wide, g), FormatError);
    {
      // Same container, but the stored config disagrees with the arrays.
      std::ofstream os(dir / "bad.bin", std::ios::binary);
      BinaryWriter w(os);
      w.raw("USGANPRM", 8);
      w.u32(kParamFormatVersion);
      w.u8(static_cast<uint8_t>(ParamKind::generator));
      write_model_config(w, cfg_wide);
      write_param_set(w, g);
    }
    CHECK_THROWS_AS(load_params(dir / "bad.bin"), FormatError);
    CHECK_THROWS_AS(load_params(dir / "missing.bin"), IoError);
    std::filesystem::remove_all(dir);
  }
}
