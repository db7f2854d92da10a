#include "usgan/param_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "usgan/errors.hpp"

namespace usgan {

namespace {

constexpr char kParamMagic[] = "USGANPRM";

uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 1;
    case torch::kFloat64: return 2;
    default: throw FormatError("only float32/float64 tensors can be serialized");
  }
}

torch::ScalarType dtype_from_code(uint8_t c) {
  switch (c) {
    case 1: return torch::kFloat32;
    case 2: return torch::kFloat64;
    default: throw FormatError("unknown dtype code " + std::to_string(c));
  }
}

template <class T>
void store_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T load_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw FormatError("unexpected end of data");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

void byteswap_elements(unsigned char* p, std::size_t count, std::size_t width) {
  for (std::size_t i = 0; i < count; ++i) std::reverse(p + i * width, p + (i + 1) * width);
}

}  // namespace

void BinaryWriter::u8(uint8_t v) { os_.put(static_cast<char>(v)); }
void BinaryWriter::u32(uint32_t v) { store_le(os_, v); }
void BinaryWriter::u64(uint64_t v) { store_le(os_, v); }
void BinaryWriter::f64(double v) { store_le(os_, std::bit_cast<uint64_t>(v)); }
void BinaryWriter::str(const std::string& s) {
  u32(static_cast<uint32_t>(s.size()));
  raw(s.data(), s.size());
}
void BinaryWriter::raw(const void* data, std::size_t n) {
  os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

uint8_t BinaryReader::u8() {
  const int c = is_.get();
  if (c == std::char_traits<char>::eof()) throw FormatError("unexpected end of data");
  return static_cast<uint8_t>(c);
}
uint32_t BinaryReader::u32() { return load_le<uint32_t>(is_); }
uint64_t BinaryReader::u64() { return load_le<uint64_t>(is_); }
double BinaryReader::f64() { return std::bit_cast<double>(load_le<uint64_t>(is_)); }
std::string BinaryReader::str() {
  const uint32_t n = u32();
  if (n > (1u << 28)) throw FormatError("string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  raw(s.data(), n);
  return s;
}
void BinaryReader::raw(void* data, std::size_t n) {
  is_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is_.gcount()) != n) throw FormatError("unexpected end of data");
}
void BinaryReader::expect(const std::string& magic) {
  std::string got(magic.size(), '\0');
  is_.read(got.data(), static_cast<std::streamsize>(magic.size()));
  if (!is_ || got != magic) throw FormatError("bad magic: expected '" + magic + "'");
}

void write_param_set(BinaryWriter& w, const ParamSet& params) {
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params.entries()) {
    w.str(name);
    w.u8(dtype_code(t.scalar_type()));
    w.u32(static_cast<uint32_t>(t.dim()));
    for (auto s : t.sizes()) w.i64(s);
  }
  for (const auto& [name, t] : params.entries()) {
    const auto c = t.detach().contiguous();
    if constexpr (std::endian::native == std::endian::little) {
      w.raw(c.data_ptr(), c.nbytes());
    } else {
      std::vector<unsigned char> buf(c.nbytes());
      std::memcpy(buf.data(), c.data_ptr(), buf.size());
      byteswap_elements(buf.data(), c.numel(), c.element_size());
      w.raw(buf.data(), buf.size());
    }
  }
}

ParamSet read_param_set(BinaryReader& r) {
  const uint32_t count = r.u32();
  if (count > 100000) throw FormatError("implausible tensor count " + std::to_string(count));
  struct Header {
    std::string name;
    torch::ScalarType dtype;
    std::vector<int64_t> shape;
  };
  std::vector<Header> manifest;
  manifest.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    Header h;
    h.name = r.str();
    h.dtype = dtype_from_code(r.u8());
    const uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("'" + h.name + "' has implausible rank");
    for (uint32_t k = 0; k < rank; ++k) {
      const int64_t s = r.i64();
      if (s < 0) throw FormatError("'" + h.name + "' has a negative dimension");
      h.shape.push_back(s);
    }
    manifest.push_back(std::move(h));
  }
  ParamSet params;
  for (const auto& h : manifest) {
    auto t = torch::empty(h.shape, h.dtype);
    r.raw(t.data_ptr(), t.nbytes());
    if constexpr (std::endian::native != std::endian::little)
      byteswap_elements(static_cast<unsigned char*>(t.data_ptr()), t.numel(), t.element_size());
    params.add(h.name, std::move(t));
  }
  return params;
}

void write_model_config(BinaryWriter& w, const ModelConfig& c) {
  w.i64(c.image_size);
  w.i64(c.num_classes);
  w.i64(c.base_channels);
  w.i64(c.num_residual_blocks);
  w.u8(c.use_ultimate_skip ? 1 : 0);
  w.i64(c.discriminator_layers);
}

ModelConfig read_model_config(BinaryReader& r) {
  ModelConfig c;
  c.image_size = r.i64();
  c.num_classes = r.i64();
  c.base_channels = r.i64();
  c.num_residual_blocks = r.i64();
  c.use_ultimate_skip = r.u8() != 0;
  c.discriminator_layers = r.i64();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("stored ") + e.what());
  }
  return c;
}

void save_params(const std::filesystem::path& path, ParamKind kind, const ModelConfig& config,
                 const ParamSet& params) {
  check_layout(params,
               kind == ParamKind::generator ? generator_layout(config) : discriminator_layout(config),
               kind == ParamKind::generator ? "generator" : "discriminator");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path.string(), "cannot open for writing");
  BinaryWriter w(os);
  w.raw(kParamMagic, 8);
  w.u32(kParamFormatVersion);
  w.u8(static_cast<uint8_t>(kind));
  write_model_config(w, config);
  write_param_set(w, params);
  if (!os.flush()) throw IoError(path.string(), "write failed");
}

LoadedParams load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string(), "cannot open for reading");
  try {
    BinaryReader r(is);
    r.expect(std::string(kParamMagic, 8));
    const uint32_t version = r.u32();
    if (version != kParamFormatVersion)
      throw FormatError("unsupported parameter format version " + std::to_string(version));
    const uint8_t kind = r.u8();
    if (kind != 1 && kind != 2) throw FormatError("unknown parameter kind " + std::to_string(kind));
    LoadedParams out{static_cast<ParamKind>(kind), read_model_config(r), {}};
    out.params = read_param_set(r);
    check_layout(out.params,
                 out.kind == ParamKind::generator ? generator_layout(out.config)
                                                  : discriminator_layout(out.config),
                 out.kind == ParamKind::generator ? "generator" : "discriminator");
    return out;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string(), "cannot open for reading");
  uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace usgan
