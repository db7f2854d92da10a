#include "usgan/image_io.hpp"

#include <png.h>

#include <cstring>

#include "usgan/errors.hpp"

namespace usgan {

RgbImage read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError(path.string(), std::string("cannot decode PNG: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  RgbImage out(img.width, img.height);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError(path.string(), "cannot decode PNG: " + msg);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width * image.height * 3))
    throw IoError(path.string(), "refusing to write an empty or inconsistent image");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw IoError(path.string(), std::string("cannot write PNG: ") + img.message);
}

RgbImage to_rgb8(const torch::Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3) throw DimensionError("expected a (3, H, W) image");
  const auto hwc = ((chw.detach().to(torch::kFloat64) + 1.0) * 127.5)
                       .round()
                       .clamp(0, 255)
                       .to(torch::kUInt8)
                       .permute({1, 2, 0})
                       .contiguous();
  RgbImage out(chw.size(2), chw.size(1));
  std::memcpy(out.pixels.data(), hwc.data_ptr<uint8_t>(), out.pixels.size());
  return out;
}

torch::Tensor to_tensor(const RgbImage& image) {
  auto hwc = torch::from_blob(const_cast<uint8_t*>(image.pixels.data()),
                              {image.height, image.width, 3}, torch::kUInt8);
  return (hwc.permute({2, 0, 1}).to(torch::kFloat64) * 2.0 / 255.0 - 1.0)
      .to(torch::kFloat32)
      .contiguous();
}

}  // namespace usgan
