#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "usgan/image_io.hpp"

namespace usgan {

/// Center-crops to the largest square, bilinearly resizes to size × size
/// (half-pixel centers, no antialiasing) and maps 8-bit v to 2v/255 − 1.
/// Returns (3, size, size) float32.
torch::Tensor preprocess(const RgbImage& raw, int64_t size);

/// read_png + preprocess.
torch::Tensor load_image(const std::filesystem::path& path, int64_t size);

struct ManifestRecord {
  std::string image_path;  ///< relative to the manifest directory unless absolute
  int64_t expression_id = 0;
  std::string subject_id;

  bool operator==(const ManifestRecord&) const = default;
};

/// Labelled face images.
///
/// On disk:
///
///     #classes: neutral,happy,sad
///     path,expression_id,subject_id
///     identity_0/expr_0.png,0,identity_0
///
/// Paths may not contain commas. Relative paths resolve against `base_dir`.
struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;

  int64_t num_classes() const { return static_cast<int64_t>(class_names.size()); }
  std::filesystem::path resolve(const ManifestRecord& r) const;
  /// Label range, non-empty subjects, >= 2 classes; with `check_files` also
  /// that every image path exists.
  void validate(bool check_files = false) const;
};

DatasetManifest read_manifest(const std::filesystem::path& path, bool check_files = true);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

enum class SplitMode { record, subject };

/// Seeded shuffle, then the first floor(n · train_fraction) records go to
/// training. In subject mode whole subjects are assigned in shuffled order
/// until the training side reaches that many records.
std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest,
                                                  double train_fraction, uint64_t seed,
                                                  SplitMode mode = SplitMode::record);

/// Decoded, preprocessed images held in memory.
struct Dataset {
  torch::Tensor images;  ///< (N, 3, D, D) float32 in [-1, 1]
  torch::Tensor labels;  ///< (N) int64 class ids
  int64_t num_classes = 0;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  Dataset subset(const std::vector<int64_t>& indices) const;
};

Dataset load_dataset(const DatasetManifest& manifest, int64_t image_size);

struct Batch {
  torch::Tensor images;  ///< (B, 3, D, D)
  torch::Tensor labels;  ///< (B, C) one-hot float32
};

/// Shuffled mini-batches over a Dataset. Each epoch draws a fresh permutation
/// from the stream's rng; the trailing short batch is dropped.
class BatchStream {
 public:
  BatchStream(const Dataset& data, int64_t batch_size, std::mt19937_64 rng,
              bool horizontal_flip = false);

  int64_t batches_per_epoch() const;
  /// Fills `out` and returns true, or returns false at the end of the epoch
  /// (the next call then starts a new epoch).
  bool next(Batch& out);
  /// Drops the rest of the current epoch.
  void start_epoch();

 private:
  const Dataset* data_;
  int64_t batch_size_;
  std::mt19937_64 rng_;
  bool flip_;
  std::vector<int64_t> order_;
  int64_t cursor_ = 0;
};

/// Per-class expression parameters of the sprite faces.
struct SpriteExpression {
  std::string name;
  double mouth_curvature;  ///< > 0 smiles, < 0 frowns
  double mouth_openness;   ///< 0 closed line .. 1 wide open
  double eyebrow_angle;    ///< radians; > 0 lowers the inner ends
};

/// Per-identity appearance of a sprite face.
struct SpriteIdentity {
  double face_hue;     ///< [0, 1)
  double face_value;   ///< skin brightness
  double face_radius;  ///< fraction of the image side
  double eye_spacing;  ///< distance between eye centers, fraction of the side
};

struct SpriteSpec {
  int64_t image_size = 64;
  int64_t num_classes = 7;
  uint64_t seed = 0;
};

/// The seven-class expression table; the first C entries are used.
const std::vector<SpriteExpression>& sprite_expressions();

/// Identity `k` of the corpus drawn from `seed`.
SpriteIdentity sprite_identity(uint64_t seed, int64_t k);

RgbImage render_sprite(const SpriteIdentity& identity, const SpriteExpression& expression,
                       int64_t size);

/// Pixel rectangle [x0, x1) × [y0, y1).
struct PixelBox {
  int64_t x0, y0, x1, y1;
  bool contains(int64_t x, int64_t y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

/// The only regions where renderings of one identity differ across classes.
std::vector<PixelBox> sprite_expression_regions(const SpriteIdentity& identity, int64_t size);

/// Writes `identity_<k>/expr_<c>.png` for every identity and class plus
/// `manifest.csv` under `out_dir`, and returns the manifest.
DatasetManifest generate_toy_corpus(const SpriteSpec& spec, int64_t num_identities,
                                    const std::filesystem::path& out_dir);

}  // namespace usgan
