#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "usgan/model.hpp"

namespace usgan {

/// Little-endian primitive writer. All multi-byte values are stored LSB first
/// regardless of host byte order.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void u8(uint8_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v);
  void str(const std::string& s);
  void raw(const void* data, std::size_t n);

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}

  uint8_t u8();
  uint32_t u32();
  uint64_t u64();
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64();
  std::string str();
  void raw(void* data, std::size_t n);
  /// Consumes `magic.size()` bytes; throws FormatError on mismatch.
  void expect(const std::string& magic);

 private:
  std::istream& is_;
};

/// Named-array group: a manifest (name, dtype, shape per entry) followed by
/// the element data of every entry in manifest order. Supports float32 and
/// float64 tensors.
void write_param_set(BinaryWriter& w, const ParamSet& params);
ParamSet read_param_set(BinaryReader& r);

void write_model_config(BinaryWriter& w, const ModelConfig& config);
ModelConfig read_model_config(BinaryReader& r);

inline constexpr uint32_t kParamFormatVersion = 1;

enum class ParamKind : uint8_t { generator = 1, discriminator = 2 };

/// Standalone parameter file: magic, version, kind, ModelConfig, one group.
void save_params(const std::filesystem::path& path, ParamKind kind, const ModelConfig& config,
                 const ParamSet& params);

struct LoadedParams {
  ParamKind kind;
  ModelConfig config;
  ParamSet params;
};

/// Loads and validates names and shapes against the stored ModelConfig.
LoadedParams load_params(const std::filesystem::path& path);

/// 64-bit FNV-1a over the bytes of a file, for quick content identity checks.
uint64_t file_hash(const std::filesystem::path& path);
std::string hex64(uint64_t v);

}  // namespace usgan
