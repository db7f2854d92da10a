#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <torch/torch.h>

#include "usgan/model.hpp"

namespace usgan::test {

inline torch::Tensor random_images(int64_t n, int64_t d, uint64_t seed, double amp = 0.9) {
  torch::manual_seed(seed);
  return (torch::rand({n, 3, d, d}) * 2 - 1) * amp;
}

inline torch::Tensor labels_of(std::vector<int64_t> ids, int64_t c) {
  return usgan::one_hot(torch::tensor(ids, torch::kInt64), c);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() /
             ("usgan_" + tag + "_" + std::to_string(rng() % 1000000000));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ModelConfig tiny_config(int64_t d = 16, int64_t c = 3) {
  ModelConfig m;
  m.image_size = d;
  m.num_classes = c;
  m.base_channels = 4;
  m.num_residual_blocks = 1;
  m.discriminator_layers = 3;
  return m;
}

}  // namespace usgan::test
