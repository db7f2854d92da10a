#include "usgan/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "usgan/errors.hpp"

namespace usgan {

namespace F = torch::nn::functional;

torch::Tensor preprocess(const RgbImage& raw, int64_t size) {
  if (raw.width < 1 || raw.height < 1) throw ValidationError("cannot preprocess an empty image");
  if (size < 1) throw ConfigError("target size must be >= 1");
  const int64_t side = std::min(raw.width, raw.height);
  const int64_t x0 = (raw.width - side) / 2;
  const int64_t y0 = (raw.height - side) / 2;
  auto full = torch::from_blob(const_cast<uint8_t*>(raw.pixels.data()), {raw.height, raw.width, 3},
                               torch::kUInt8);
  auto crop = full.slice(0, y0, y0 + side).slice(1, x0, x0 + side).permute({2, 0, 1});
  auto values = crop.to(torch::kFloat64);
  if (side != size) {
    values = F::interpolate(values.unsqueeze(0), F::InterpolateFuncOptions()
                                                     .size(std::vector<int64_t>{size, size})
                                                     .mode(torch::kBilinear)
                                                     .align_corners(false))
                 .squeeze(0);
  }
  return (values * 2.0 / 255.0 - 1.0).clamp(-1.0, 1.0).to(torch::kFloat32).contiguous();
}

torch::Tensor load_image(const std::filesystem::path& path, int64_t size) {
  return preprocess(read_png(path), size);
}

std::filesystem::path DatasetManifest::resolve(const ManifestRecord& r) const {
  const std::filesystem::path p(r.image_path);
  return p.is_absolute() ? p : base_dir / p;
}

void DatasetManifest::validate(bool check_files) const {
  if (class_names.size() < 2) throw ValidationError("manifest must name at least 2 classes");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.expression_id < 0 || r.expression_id >= num_classes())
      throw ValidationError("record " + std::to_string(i) + ": expression_id " +
                            std::to_string(r.expression_id) + " outside [0, " +
                            std::to_string(num_classes()) + ")");
    if (r.subject_id.empty())
      throw ValidationError("record " + std::to_string(i) + ": empty subject_id");
    if (check_files && !std::filesystem::exists(resolve(r)))
      throw IoError(resolve(r).string(), "image listed in manifest does not exist");
  }
}

namespace {

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream is(path);
  if (!is) throw IoError(path.string(), "cannot open manifest");
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  int lineno = 0;
  bool have_classes = false;
  auto bad = [&](const std::string& what) {
    throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.starts_with("#classes:")) {
      m.class_names = split_commas(std::string_view(line).substr(9));
      have_classes = true;
      continue;
    }
    if (line.front() == '#') continue;
    if (line == "path,expression_id,subject_id") continue;
    const auto fields = split_commas(line);
    if (fields.size() != 3) bad("expected 3 comma-separated fields");
    ManifestRecord r;
    r.image_path = fields[0];
    const auto& id = fields[1];
    const auto [ptr, ec] = std::from_chars(id.data(), id.data() + id.size(), r.expression_id);
    if (ec != std::errc() || ptr != id.data() + id.size()) bad("bad expression_id '" + id + "'");
    r.subject_id = fields[2];
    m.records.push_back(std::move(r));
  }
  if (!have_classes) throw FormatError(path.string() + ": missing '#classes:' header line");
  m.validate(check_files);
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError(path.string(), "cannot open manifest for writing");
  os << "#classes: ";
  for (std::size_t i = 0; i < m.class_names.size(); ++i) os << (i ? "," : "") << m.class_names[i];
  os << "\npath,expression_id,subject_id\n";
  for (const auto& r : m.records)
    os << r.image_path << ',' << r.expression_id << ',' << r.subject_id << '\n';
  if (!os.flush()) throw IoError(path.string(), "write failed");
}

std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest,
                                                  double train_fraction, uint64_t seed,
                                                  SplitMode mode) {
  if (manifest.records.empty()) throw ValidationError("cannot split an empty manifest");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie strictly between 0 and 1");

  const std::size_t n = manifest.records.size();
  const auto n_train = static_cast<std::size_t>(std::floor(double(n) * train_fraction));
  std::mt19937_64 rng(seed);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<bool> to_train(n, false);

  if (mode == SplitMode::record) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_train; ++i) to_train[order[i]] = true;
  } else {
    std::map<std::string, std::vector<std::size_t>> by_subject;
    for (std::size_t i = 0; i < n; ++i) by_subject[manifest.records[i].subject_id].push_back(i);
    std::vector<const std::vector<std::size_t>*> groups;
    for (const auto& [s, idx] : by_subject) groups.push_back(&idx);
    std::shuffle(groups.begin(), groups.end(), rng);
    std::size_t taken = 0;
    for (const auto* g : groups) {
      if (taken >= n_train) break;
      for (auto i : *g) to_train[i] = true;
      taken += g->size();
    }
  }

  DatasetManifest train{manifest.class_names, {}, manifest.base_dir};
  DatasetManifest test{manifest.class_names, {}, manifest.base_dir};
  // Keep each side in shuffled order for record mode, manifest order otherwise.
  for (auto i : order) (to_train[i] ? train : test).records.push_back(manifest.records[i]);
  return {std::move(train), std::move(test)};
}

Dataset Dataset::subset(const std::vector<int64_t>& indices) const {
  const auto idx = torch::tensor(indices, torch::kInt64);
  return {images.index_select(0, idx), labels.index_select(0, idx), num_classes};
}

Dataset load_dataset(const DatasetManifest& manifest, int64_t image_size) {
  manifest.validate();
  if (manifest.records.empty()) throw ValidationError("manifest has no records");
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  images.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    images.push_back(load_image(manifest.resolve(r), image_size));
    labels.push_back(r.expression_id);
  }
  return {torch::stack(images), torch::tensor(labels, torch::kInt64), manifest.num_classes()};
}

BatchStream::BatchStream(const Dataset& data, int64_t batch_size, std::mt19937_64 rng,
                         bool horizontal_flip)
    : data_(&data), batch_size_(batch_size), rng_(std::move(rng)), flip_(horizontal_flip) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  cursor_ = -1;
}

int64_t BatchStream::batches_per_epoch() const { return data_->size() / batch_size_; }

void BatchStream::start_epoch() {
  order_.resize(static_cast<std::size_t>(data_->size()));
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

bool BatchStream::next(Batch& out) {
  if (cursor_ < 0) start_epoch();
  if (cursor_ + batch_size_ > static_cast<int64_t>(order_.size())) {
    cursor_ = -1;
    return false;
  }
  std::vector<int64_t> idx(order_.begin() + cursor_, order_.begin() + cursor_ + batch_size_);
  cursor_ += batch_size_;
  const auto sel = torch::tensor(idx, torch::kInt64);
  out.images = data_->images.index_select(0, sel);
  if (flip_) {
    std::bernoulli_distribution coin(0.5);
    for (int64_t i = 0; i < batch_size_; ++i)
      if (coin(rng_)) out.images[i] = out.images[i].flip({2});
  }
  out.labels = torch::one_hot(data_->labels.index_select(0, sel), data_->num_classes)
                   .to(torch::kFloat32);
  return true;
}

}  // namespace usgan
