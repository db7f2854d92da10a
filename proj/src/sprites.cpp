#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "usgan/data.hpp"
#include "usgan/errors.hpp"

namespace usgan {

namespace {

using Rgb = std::array<double, 3>;

constexpr int kSubsamples = 4;  // per axis

constexpr Rgb kBackground{0.92, 0.92, 0.92};
constexpr Rgb kEye{0.10, 0.10, 0.15};
constexpr Rgb kBrow{0.25, 0.15, 0.10};
constexpr Rgb kMouth{0.45, 0.05, 0.10};

constexpr double kFaceCy = 0.52;
constexpr double kEyeY = 0.43;
constexpr double kEyeRadius = 0.05;
constexpr double kBrowY = 0.33;
constexpr double kBrowHalfLength = 0.08;
constexpr double kBrowThickness = 0.028;
constexpr double kBrowMaxAngle = 0.5;
constexpr double kMouthY = 0.70;
constexpr double kMouthHalfWidth = 0.15;
constexpr double kMouthBend = 0.08;
constexpr double kLipHalf = 0.022;
constexpr double kOpenHalf = 0.06;

// Normalized [u0, u1] x [v0, v1] rectangle.
struct Box {
  double u0, v0, u1, v1;
  bool contains(double u, double v) const { return u >= u0 && u <= u1 && v >= v0 && v <= v1; }
};

Box mouth_box() {
  const double reach = kMouthBend * 0.5 + kLipHalf + kOpenHalf + 0.005;
  return {0.5 - kMouthHalfWidth, kMouthY - reach, 0.5 + kMouthHalfWidth, kMouthY + reach};
}

Box brow_box(const SpriteIdentity& id) {
  const double du = id.eye_spacing / 2 + kBrowHalfLength + kBrowThickness + 0.005;
  const double dv = kBrowHalfLength * std::sin(kBrowMaxAngle) + kBrowThickness + 0.005;
  return {0.5 - du, kBrowY - dv, 0.5 + du, kBrowY + dv};
}

Rgb hsv(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double t = std::clamp(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

bool on_brow(const SpriteIdentity& id, const SpriteExpression& e, double u, double v) {
  const double angle = std::clamp(e.eyebrow_angle, -kBrowMaxAngle, kBrowMaxAngle);
  const double c = std::cos(angle) * kBrowHalfLength, s = std::sin(angle) * kBrowHalfLength;
  for (int side : {-1, 1}) {
    const double cx = 0.5 + side * id.eye_spacing / 2;
    // Inner end (towards the nose) sits at t = -1 and drops for positive angles.
    const double ix = cx - side * c, iy = kBrowY + s;
    const double ox = cx + side * c, oy = kBrowY - s;
    if (segment_distance(u, v, ix, iy, ox, oy) <= kBrowThickness / 2) return true;
  }
  return false;
}

bool on_mouth(const SpriteExpression& e, double u, double v) {
  const double t = (u - 0.5) / kMouthHalfWidth;
  if (std::abs(t) > 1.0) return false;
  const double k = std::clamp(e.mouth_curvature, -1.0, 1.0);
  const double open = std::clamp(e.mouth_openness, 0.0, 1.0);
  const double center = kMouthY + k * kMouthBend * (0.5 - t * t);
  const double half = kLipHalf + open * kOpenHalf * (1 - t * t);
  return std::abs(v - center) <= half;
}

Rgb shade(const SpriteIdentity& id, const SpriteExpression& e, const Box& mouth, const Box& brows,
          double u, double v) {
  Rgb c = kBackground;
  const double ry = id.face_radius * 1.08;
  const double fx = (u - 0.5) / id.face_radius, fy = (v - kFaceCy) / ry;
  if (fx * fx + fy * fy <= 1.0) c = hsv(id.face_hue, 0.5, id.face_value);
  for (int side : {-1, 1})
    if (std::hypot(u - (0.5 + side * id.eye_spacing / 2), v - kEyeY) <= kEyeRadius) c = kEye;
  if (brows.contains(u, v) && on_brow(id, e, u, v)) c = kBrow;
  if (mouth.contains(u, v) && on_mouth(e, u, v)) c = kMouth;
  return c;
}

PixelBox to_pixels(const Box& b, int64_t size) {
  auto lo = [&](double x) { return std::clamp<int64_t>(int64_t(std::floor(x * size)), 0, size); };
  auto hi = [&](double x) { return std::clamp<int64_t>(int64_t(std::ceil(x * size)) + 1, 0, size); };
  return {lo(b.u0), lo(b.v0), hi(b.u1), hi(b.v1)};
}

}  // namespace

const std::vector<SpriteExpression>& sprite_expressions() {
  static const std::vector<SpriteExpression> table = {
      {"neutral", 0.0, 0.0, 0.0},     {"happy", 1.0, 0.25, 0.0},   {"sad", -1.0, 0.0, -0.4},
      {"surprise", 0.0, 1.0, -0.2},   {"angry", -0.4, 0.0, 0.45},  {"fear", -0.5, 0.6, -0.35},
      {"disgust", -0.7, 0.3, 0.25},
  };
  return table;
}

SpriteIdentity sprite_identity(uint64_t seed, int64_t k) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(k), 0x5b1e7u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SpriteIdentity id;
  id.face_hue = u01(rng);
  id.face_value = 0.65 + 0.30 * u01(rng);
  id.face_radius = 0.36 + 0.08 * u01(rng);
  id.eye_spacing = 0.22 + 0.10 * u01(rng);
  return id;
}

RgbImage render_sprite(const SpriteIdentity& id, const SpriteExpression& e, int64_t size) {
  if (size < 4) throw ConfigError("sprite size must be >= 4");
  RgbImage img(size, size);
  const Box mouth = mouth_box();
  const Box brows = brow_box(id);
  for (int64_t y = 0; y < size; ++y) {
    for (int64_t x = 0; x < size; ++x) {
      Rgb acc{0, 0, 0};
      for (int sy = 0; sy < kSubsamples; ++sy) {
        for (int sx = 0; sx < kSubsamples; ++sx) {
          const double u = (double(x) + (sx + 0.5) / kSubsamples) / double(size);
          const double v = (double(y) + (sy + 0.5) / kSubsamples) / double(size);
          const Rgb c = shade(id, e, mouth, brows, u, v);
          for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch];
        }
      }
      auto* px = img.at(x, y);
      for (int ch = 0; ch < 3; ++ch)
        px[ch] = static_cast<uint8_t>(
            std::lround(std::clamp(acc[ch] / (kSubsamples * kSubsamples), 0.0, 1.0) * 255.0));
    }
  }
  return img;
}

std::vector<PixelBox> sprite_expression_regions(const SpriteIdentity& id, int64_t size) {
  return {to_pixels(mouth_box(), size), to_pixels(brow_box(id), size)};
}

DatasetManifest generate_toy_corpus(const SpriteSpec& spec, int64_t num_identities,
                                    const std::filesystem::path& out_dir) {
  if (num_identities < 1) throw ConfigError("num_identities must be >= 1");
  const auto& table = sprite_expressions();
  if (spec.num_classes < 2 || spec.num_classes > static_cast<int64_t>(table.size()))
    throw ConfigError("sprite corpus supports 2.." + std::to_string(table.size()) + " classes");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string(), "cannot create directory: " + ec.message());

  DatasetManifest m;
  m.base_dir = out_dir;
  for (int64_t c = 0; c < spec.num_classes; ++c) m.class_names.push_back(table[c].name);
  for (int64_t k = 0; k < num_identities; ++k) {
    const auto id = sprite_identity(spec.seed, k);
    const std::string subject = "identity_" + std::to_string(k);
    std::filesystem::create_directories(out_dir / subject, ec);
    if (ec) throw IoError((out_dir / subject).string(), "cannot create directory: " + ec.message());
    for (int64_t c = 0; c < spec.num_classes; ++c) {
      const std::string rel = subject + "/expr_" + std::to_string(c) + ".png";
      write_png(out_dir / rel, render_sprite(id, table[c], spec.image_size));
      m.records.push_back({rel, c, subject});
    }
  }
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

}  // namespace usgan
