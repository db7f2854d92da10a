#include <doctest.h>

#include <fstream>
#include <set>

#include "helpers.hpp"
#include "usgan/data.hpp"
#include "usgan/errors.hpp"
#include "usgan/image_io.hpp"
#include "usgan/param_io.hpp"

using namespace usgan;

namespace {

DatasetManifest synthetic_manifest(int64_t n, int64_t subjects) {
  DatasetManifest m;
  m.class_names = {"a", "b", "c"};
  for (int64_t i = 0; i < n; ++i)
    m.records.push_back({"img_" + std::to_string(i) + ".png", i % 3, "s" + std::to_string(i % subjects)});
  return m;
}

RgbImage constant_image(int64_t w, int64_t h, uint8_t v) {
  RgbImage im(w, h);
  std::fill(im.pixels.begin(), im.pixels.end(), v);
  return im;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("preprocess: crop arithmetic, intensity mapping and constant images") {
    auto wide = constant_image(600, 400, 0);
    // Mark the columns the center crop discards.
    for (int64_t y = 0; y < 400; ++y)
      for (int64_t x = 0; x < 600; ++x)
        if (x < 100 || x >= 500) std::fill_n(wide.at(x, y), 3, uint8_t{255});
    const auto t = preprocess(wide, 128);
    CHECK(t.sizes() == torch::IntArrayRef({3, 128, 128}));
    CHECK(t.eq(-1.0f).all().item<bool>());

    CHECK(preprocess(constant_image(8, 8, 255), 8).eq(1.0f).all().item<bool>());
    CHECK(preprocess(constant_image(8, 8, 0), 8).eq(-1.0f).all().item<bool>());
    const auto gray = preprocess(constant_image(128, 128, 128), 128);
    CHECK(gray.sub(2.0 * 128 / 255 - 1).abs().max().item<double>() < 1e-7);
    const auto gray_small = preprocess(constant_image(300, 200, 128), 64);
    CHECK(gray_small.sub(2.0 * 128 / 255 - 1).abs().max().item<double>() < 1e-6);
  }

  TEST_CASE("preprocess is the plain intensity map on images already at the target size") {
    RgbImage im(16, 16);
    for (std::size_t i = 0; i < im.pixels.size(); ++i) im.pixels[i] = static_cast<uint8_t>((i * 37) % 256);
    const auto t = preprocess(im, 16);
    CHECK(torch::equal(t, to_tensor(im)));
    CHECK(to_rgb8(t) == im);
  }

  TEST_CASE("png round trip and typed errors") {
    const auto dir = usgan::test::temp_dir("png");
    RgbImage im(5, 3);
    for (std::size_t i = 0; i < im.pixels.size(); ++i) im.pixels[i] = static_cast<uint8_t>(i * 11);
    write_png(dir / "a.png", im);
    CHECK(read_png(dir / "a.png") == im);
    CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
    std::ofstream(dir / "junk.png") << "not a png";
    try {
      read_png(dir / "junk.png");
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.path() == (dir / "junk.png").string());
    }
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("manifest round trip and validation") {
    const auto dir = usgan::test::temp_dir("manifest");
    auto m = synthetic_manifest(10, 4);
    write_manifest(dir / "m.csv", m);
    const auto back = read_manifest(dir / "m.csv", /*check_files=*/false);
    CHECK((back.class_names == m.class_names));
    CHECK((back.records == m.records));
    CHECK(back.base_dir == dir);
    CHECK_THROWS_AS(read_manifest(dir / "m.csv", /*check_files=*/true), IoError);

    std::ofstream(dir / "bad.csv") << "#classes: a,b\npath,expression_id,subject_id\nx.png,2,s\n";
    CHECK_THROWS_AS(read_manifest(dir / "bad.csv", false), ValidationError);
    std::ofstream(dir / "noheader.csv") << "x.png,0,s\n";
    CHECK_THROWS_AS(read_manifest(dir / "noheader.csv", false), FormatError);
    std::ofstream(dir / "nosubject.csv") << "#classes: a,b\nx.png,0,\n";
    CHECK_THROWS_AS(read_manifest(dir / "nosubject.csv", false), ValidationError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("split: floor arithmetic, determinism, exact partition") {
    const auto m = synthetic_manifest(2569, 50);
    const auto [tr, te] = split(m, 0.9, 0);
    CHECK(tr.records.size() == 2312);
    CHECK(te.records.size() == 257);
    const auto [tr2, te2] = split(m, 0.9, 0);
    CHECK((tr.records == tr2.records));
    CHECK((te.records == te2.records));
    CHECK_THROWS(split(DatasetManifest{{"a", "b"}, {}, {}}, 0.9, 0));
    CHECK_THROWS_AS(split(m, 1.0, 0), ConfigError);

    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
      const auto n = static_cast<int64_t>(rng() % 200 + 1);
      const double frac = 0.05 + 0.9 * double(rng() % 1000) / 1000.0;
      const auto mm = synthetic_manifest(n, static_cast<int64_t>(rng() % 10 + 1));
      for (auto mode : {SplitMode::record, SplitMode::subject}) {
        const auto [a, b] = split(mm, frac, rng(), mode);
        std::multiset<std::string> seen;
        for (const auto& r : a.records) seen.insert(r.image_path);
        for (const auto& r : b.records) seen.insert(r.image_path);
        std::multiset<std::string> all;
        for (const auto& r : mm.records) all.insert(r.image_path);
        CHECK(seen == all);
        if (mode == SplitMode::record) {
          CHECK(a.records.size() == static_cast<std::size_t>(std::floor(double(n) * frac)));
        } else {
          std::set<std::string> sa, sb;
          for (const auto& r : a.records) sa.insert(r.subject_id);
          for (const auto& r : b.records) sb.insert(r.subject_id);
          for (const auto& s : sa) CHECK(sb.count(s) == 0);
        }
      }
    }
  }

  TEST_CASE("batch stream: counts, one-hot labels, seeded order") {
    Dataset d{torch::rand({100, 3, 4, 4}) * 2 - 1, torch::arange(100, torch::kInt64) % 5, 5};
    BatchStream s(d, 8, std::mt19937_64(1));
    CHECK(s.batches_per_epoch() == 12);
    Batch b;
    int count = 0;
    std::vector<torch::Tensor> first;
    while (s.next(b)) {
      ++count;
      check_one_hot(b.labels, 5);
      CHECK(b.images.sizes() == torch::IntArrayRef({8, 3, 4, 4}));
      first.push_back(b.images);
    }
    CHECK(count == 12);
    BatchStream s2(d, 8, std::mt19937_64(1));
    for (const auto& f : first) {
      REQUIRE(s2.next(b));
      CHECK(torch::equal(f, b.images));
    }
  }

  TEST_CASE("toy corpus: counts, balance, determinism") {
    const auto dir = usgan::test::temp_dir("toy");
    SpriteSpec spec;
    spec.image_size = 32;
    const auto m = generate_toy_corpus(spec, 6, dir / "a");
    CHECK(m.records.size() == 42);
    std::vector<int> per(7, 0);
    for (const auto& r : m.records) ++per[static_cast<std::size_t>(r.expression_id)];
    for (int v : per) CHECK(v == 6);
    generate_toy_corpus(spec, 6, dir / "b");
    for (const auto& r : m.records)
      CHECK(file_hash(dir / "a" / r.image_path) == file_hash(dir / "b" / r.image_path));
    CHECK(file_hash(dir / "a" / "manifest.csv") == file_hash(dir / "b" / "manifest.csv"));
    CHECK_THROWS_AS(generate_toy_corpus(spec, 0, dir / "c"), ConfigError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("sprites of one identity differ only inside the expression regions") {
    const int64_t size = 64;
    const auto& table = sprite_expressions();
    for (int64_t k = 0; k < 10; ++k) {
      const auto id = sprite_identity(3, k);
      const auto base = render_sprite(id, table[0], size);
      const auto regions = sprite_expression_regions(id, size);
      for (std::size_t c = 1; c < table.size(); ++c) {
        const auto other = render_sprite(id, table[c], size);
        int64_t outside = 0, inside = 0;
        for (int64_t y = 0; y < size; ++y)
          for (int64_t x = 0; x < size; ++x) {
            const bool differs = !std::equal(base.at(x, y), base.at(x, y) + 3, other.at(x, y));
            bool in = false;
            for (const auto& r : regions) in = in || r.contains(x, y);
            (in ? inside : outside) += differs;
          }
        CHECK(outside == 0);
        CHECK(inside > 0);
      }
    }
  }

  TEST_CASE("nearest-centroid pixel classifier separates sprite classes") {
    const int64_t size = 32, n_train = 60, n_test = 40;
    const auto& table = sprite_expressions();
    auto render = [&](uint64_t seed, int64_t k, std::size_t c) {
      return preprocess(render_sprite(sprite_identity(seed, k), table[c], size), size);
    };
    std::vector<torch::Tensor> centroids;
    for (std::size_t c = 0; c < table.size(); ++c) {
      auto acc = torch::zeros({3, size, size});
      for (int64_t k = 0; k < n_train; ++k) acc += render(1, k, c);
      centroids.push_back(acc / double(n_train));
    }
    const auto C = torch::stack(centroids).flatten(1);
    int64_t correct = 0, total = 0;
    for (int64_t k = 0; k < n_test; ++k)
      for (std::size_t c = 0; c < table.size(); ++c) {
        const auto v = render(2, k, c).flatten();
        const auto d = (C - v).pow(2).sum(1);
        correct += d.argmin().item<int64_t>() == static_cast<int64_t>(c);
        ++total;
      }
    const double acc = double(correct) / double(total);
    INFO("accuracy " << acc);
    CHECK(acc >= 0.99);
  }

  TEST_CASE("load_dataset decodes and resizes a corpus") {
    const auto dir = usgan::test::temp_dir("load");
    SpriteSpec spec;
    spec.image_size = 32;
    spec.num_classes = 3;
    generate_toy_corpus(spec, 2, dir);
    const auto m = read_manifest(dir / "manifest.csv");
    const auto d = load_dataset(m, 16);
    CHECK(d.images.sizes() == torch::IntArrayRef({6, 3, 16, 16}));
    CHECK(d.labels.equal(torch::tensor({0, 1, 2, 0, 1, 2}, torch::kInt64)));
    CHECK(d.images.abs().max().item<float>() <= 1.0f);
    CHECK(d.num_classes == 3);
    std::filesystem::remove_all(dir);
  }
}
