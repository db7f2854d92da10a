#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace usgan {

/// Architecture hyper-parameters shared by the generator and the critic.
///
/// `base_channels` is the width of the first encoder layer (64 in the
/// reference architecture); every other width is a fixed multiple of it. The
/// critic trunk starts at the same width and doubles per layer.
///
/// `discriminator_layers` is the number of stride-2 trunk convolutions (six in
/// the reference architecture). It is a knob only so that very small images
/// (gradient checks at D = 16) still leave a non-empty trunk output.
struct ModelConfig {
  int64_t image_size = 128;
  int64_t num_classes = 7;
  int64_t base_channels = 64;
  int64_t num_residual_blocks = 1;
  bool use_ultimate_skip = true;
  int64_t discriminator_layers = 6;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  int64_t trunk_output_size() const { return image_size >> discriminator_layers; }
  int64_t trunk_output_channels() const { return base_channels << (discriminator_layers - 1); }

  bool operator==(const ModelConfig&) const = default;
};

/// Ordered, named collection of parameter tensors.
///
/// Insertion order is the canonical order used for serialization, optimizer
/// state and gradient lists.
class ParamSet {
 public:
  using Entry = std::pair<std::string, torch::Tensor>;

  void add(std::string name, torch::Tensor value);

  bool contains(std::string_view name) const;
  const torch::Tensor& at(std::string_view name) const;
  torch::Tensor& at(std::string_view name);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::vector<torch::Tensor> tensors() const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Deep copy (fresh storage).
  ParamSet clone() const;
  /// Aliases of the same storage that require grad, for building a graph.
  ParamSet requiring_grad() const;
  ParamSet to(torch::ScalarType dtype) const;

  /// Bitwise equality of names, shapes, dtypes and contents.
  bool identical(const ParamSet& other) const;

 private:
  std::vector<Entry> entries_;
};

struct GeneratorParams : ParamSet {};
struct DiscriminatorParams : ParamSet {};

/// Expected parameter layout: name and shape, in canonical order.
using ParamLayout = std::vector<std::pair<std::string, std::vector<int64_t>>>;

ParamLayout generator_layout(const ModelConfig& config);
ParamLayout discriminator_layout(const ModelConfig& config);

/// Throws FormatError if `params` names or shapes differ from `layout`.
void check_layout(const ParamSet& params, const ParamLayout& layout, std::string_view what);

/// Fan-in scaled normal initialization, deterministic under `seed`.
///
/// Convolution kernels ~ N(0, 1/fan_in) where fan_in counts the input taps
/// contributing to one output element (in·k² for convolutions, in·(k/2)² for
/// the stride-2 transposed convolutions). Biases and instance-norm shifts are
/// 0, instance-norm scales are 1.
GeneratorParams build_generator(const ModelConfig& config, uint64_t seed);
DiscriminatorParams build_discriminator(const ModelConfig& config, uint64_t seed);

/// Same layouts with every tensor filled with zeros (instance-norm scales too).
GeneratorParams zero_generator(const ModelConfig& config);
DiscriminatorParams zero_discriminator(const ModelConfig& config);

/// Sets the final generator layer to zero, which makes the residual exactly 0.
void zero_output_layer(GeneratorParams& params);

int64_t count_parameters(const ParamSet& params);

/// Records the activation shape after each named stage of a forward pass.
struct ForwardTrace {
  std::vector<std::pair<std::string, std::vector<int64_t>>> stages;
  void record(std::string name, const torch::Tensor& t) {
    stages.emplace_back(std::move(name), t.sizes().vec());
  }
};

struct GeneratorOutput {
  /// Clamped G(x, c) + x with the skip on, G(x, c) with it off.
  torch::Tensor output;
  /// Bounded network output G(x, c) in [-1, 1].
  torch::Tensor residual;
};

struct CriticOutput {
  /// D_I score, shape (N).
  torch::Tensor realism;
  /// D_c pre-softmax scores, shape (N, C).
  torch::Tensor class_logits;
};

/// Throws DimensionError / ValidationError unless `images` is (N, 3, D, D)
/// with finite entries in [-1, 1].
void check_image_batch(const torch::Tensor& images, const ModelConfig& config);

/// Throws unless `labels` is (N, C) with exactly one 1 per row and zeros elsewhere.
void check_one_hot(const torch::Tensor& labels, int64_t num_classes);

/// (N) integer class ids -> (N, C) one-hot of `dtype`.
torch::Tensor one_hot(const torch::Tensor& class_ids, int64_t num_classes,
                      torch::ScalarType dtype = torch::kFloat32);
/// (N, C) one-hot -> (N) int64 class ids.
torch::Tensor class_ids(const torch::Tensor& one_hot_labels);

/// Conditions the generator on `labels` (N, C) and applies the ultimate skip.
///
/// The label is tiled over the image plane and stacked behind the RGB planes,
/// so the first layer sees (N, 3 + C, D, D).
GeneratorOutput generator_forward(const GeneratorParams& params, const torch::Tensor& images,
                                  const torch::Tensor& labels, const ModelConfig& config,
                                  ForwardTrace* trace = nullptr);

CriticOutput discriminator_forward(const DiscriminatorParams& params, const torch::Tensor& images,
                                   const ModelConfig& config, ForwardTrace* trace = nullptr);

/// Negative slope of every critic LeakyReLU.
inline constexpr double kLeakySlope = 0.01;
/// Instance-norm variance epsilon.
inline constexpr double kNormEps = 1e-5;

}  // namespace usgan
