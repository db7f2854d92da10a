#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "usgan/data.hpp"
#include "usgan/training.hpp"

namespace usgan {

/// Contents of a run configuration file: a TrainConfig plus data and output
/// locations.
///
/// The file is flat `key = value` text. `#` starts a comment, blank lines are
/// ignored, unknown or repeated keys are errors and every key is optional
/// (its default applies).
struct RunConfig {
  TrainConfig train;
  std::string manifest;
  double train_fraction = 0.9;
  uint64_t split_seed = 0;
  SplitMode split_mode = SplitMode::record;
  std::string out_dir = "run";

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string doc;
  bool train_only;  ///< part of TrainConfig (and so of checkpoints)
};

/// Every accepted key in canonical order.
const std::vector<ConfigKey>& config_keys();

/// Throws ConfigError with the offending line number.
RunConfig parse_run_config(std::string_view text);
RunConfig read_run_config(const std::filesystem::path& path);

/// Canonical text of the TrainConfig keys only (used inside checkpoints).
std::string format_train_config(const TrainConfig& config);
TrainConfig parse_train_config(std::string_view text);

/// Canonical text of every key, each preceded by its documentation comment.
std::string format_run_config(const RunConfig& config);

}  // namespace usgan
