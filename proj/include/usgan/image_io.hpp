#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace usgan {

/// 8-bit RGB image, rows top to bottom, interleaved channels.
struct RgbImage {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int64_t w, int64_t h) : width(w), height(h), pixels(static_cast<std::size_t>(w * h * 3)) {}

  uint8_t* at(int64_t x, int64_t y) { return &pixels[static_cast<std::size_t>((y * width + x) * 3)]; }
  const uint8_t* at(int64_t x, int64_t y) const {
    return &pixels[static_cast<std::size_t>((y * width + x) * 3)];
  }
  bool operator==(const RgbImage&) const = default;
};

/// Decodes any PNG (gray, palette and alpha variants are converted to RGB).
/// Throws IoError with the path when the file is missing or undecodable.
RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// (3, H, W) tensor in [-1, 1] -> RGB8 via round((v + 1) · 127.5), clamped.
RgbImage to_rgb8(const torch::Tensor& chw);
/// RGB8 -> (3, H, W) float32 in [-1, 1] via 2v/255 − 1, no resampling.
torch::Tensor to_tensor(const RgbImage& image);

}  // namespace usgan
