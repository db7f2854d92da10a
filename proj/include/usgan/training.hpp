#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "usgan/data.hpp"
#include "usgan/model.hpp"
#include "usgan/objectives.hpp"

namespace usgan {

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int64_t batch_size = 8;
  int64_t epochs = 350;
  /// Critic updates per generator update, all on the same real batch.
  int64_t n_critic = 5;
  uint64_t seed = 0;
  /// Generator steps between checkpoints; 0 writes only the final one.
  int64_t checkpoint_every = 0;
  /// Generator steps between log records; 0 disables logging.
  int64_t log_every = 10;
  /// Stop after this many generator steps (0: run all epochs).
  int64_t max_steps = 0;
  /// Linearly decay the learning rate to 0 over the last N epochs (0: constant).
  int64_t lr_decay_epochs = 0;
  bool horizontal_flip = false;
  /// Single intra-op thread, so parameter trajectories are bit-reproducible.
  bool strict_deterministic = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

inline constexpr double kAdamEps = 1e-8;

/// Adam moments for one ParamSet, in the same order as the parameters.
struct AdamState {
  int64_t step = 0;
  ParamSet exp_avg;
  ParamSet exp_avg_sq;

  static AdamState zeros_like(const ParamSet& params);
};

/// One in-place Adam step (bias-corrected, ε = kAdamEps added after the sqrt).
void adam_update(ParamSet& params, const std::vector<torch::Tensor>& grads, AdamState& state,
                 double learning_rate, double beta1, double beta2);

/// Everything needed to continue training bit-exactly.
struct TrainState {
  TrainConfig config;
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  AdamState generator_opt;
  AdamState discriminator_opt;
  int64_t global_step = 0;     ///< generator steps taken
  int64_t epoch = 0;           ///< current epoch
  int64_t batch_in_epoch = 0;  ///< batches of `epoch` already consumed
  std::mt19937_64 rng;         ///< target labels and interpolation weights

  static TrainState initialize(const TrainConfig& config);
};

/// A uniformly random permutation of the batch's own labels (B, C).
torch::Tensor sample_target_labels(const torch::Tensor& labels, std::mt19937_64& rng);

/// x̂ from y under the original labels, through the same skip rule as the forward pass.
torch::Tensor cycle_reconstruct(const GeneratorParams& g, const torch::Tensor& y,
                                const torch::Tensor& c_o, const ModelConfig& config);

/// L_D for fixed target labels `c_t` and interpolation weights `eps`. The fake
/// batch is generated without a graph, so only `d` receives gradients. Fills
/// `report` (adv = critic gain) when given.
torch::Tensor critic_loss(const DiscriminatorParams& d, const GeneratorParams& g,
                          const TrainConfig& config, const torch::Tensor& x, const torch::Tensor& c_o,
                          const torch::Tensor& c_t, const torch::Tensor& eps,
                          LossReport* report = nullptr);

/// L_G for fixed target labels, including the cycle reconstruction.
/// Fills `report` (adv = generator gain) when given.
torch::Tensor generator_loss(const GeneratorParams& g, const DiscriminatorParams& d,
                             const TrainConfig& config, const torch::Tensor& x,
                             const torch::Tensor& c_o, const torch::Tensor& c_t,
                             LossReport* report = nullptr);

/// One critic update; the generator is untouched.
LossReport train_step_critic(TrainState& state, const Batch& batch, std::mt19937_64& rng);
/// Single generator update; the critic is untouched.
LossReport train_step_generator(TrainState& state, const Batch& batch, std::mt19937_64& rng);

/// Learning rate in effect during `epoch`.
double scheduled_learning_rate(const TrainConfig& config, int64_t epoch);

struct LogRecord {
  int64_t step = 0;
  int64_t epoch = 0;
  LossReport critic;     ///< last critic step of the batch
  LossReport generator;  ///< the generator step
  double wall_seconds = 0.0;

  /// One JSON object on a single line with fixed keys.
  std::string to_json_line() const;
};

struct TrainOptions {
  /// Checkpoints (`checkpoints/step_<n>.ckpt`, `final.ckpt`, `crash.ckpt`)
  /// and `train_log.jsonl` go here. Empty: nothing is written.
  std::filesystem::path out_dir;
  std::function<void(const LogRecord&)> on_log;
  std::function<void(const TrainState&)> on_checkpoint;
};

/// Runs from a fresh initialization.
TrainState train(const TrainConfig& config, const Dataset& data, const TrainOptions& options = {});
/// Continues `state` until its epoch or step budget is exhausted.
TrainState resume(TrainState state, const Dataset& data, const TrainOptions& options = {});

inline constexpr uint32_t kCheckpointFormatVersion = 1;

std::string serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace usgan
