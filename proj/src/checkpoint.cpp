#include <fstream>
#include <sstream>

#include "usgan/errors.hpp"
#include "usgan/param_io.hpp"
#include "usgan/run_config.hpp"
#include "usgan/training.hpp"

namespace usgan {

namespace {

constexpr char kCheckpointMagic[] = "USGANCKP";

void write_adam(BinaryWriter& w, const AdamState& s) {
  w.i64(s.step);
  write_param_set(w, s.exp_avg);
  write_param_set(w, s.exp_avg_sq);
}

AdamState read_adam(BinaryReader& r, const ParamLayout& layout, const char* what) {
  AdamState s;
  s.step = r.i64();
  s.exp_avg = read_param_set(r);
  s.exp_avg_sq = read_param_set(r);
  check_layout(s.exp_avg, layout, std::string(what) + " first moments");
  check_layout(s.exp_avg_sq, layout, std::string(what) + " second moments");
  return s;
}

}  // namespace

// Layout: magic, version, TrainConfig text, counters, sampler rng state, the
// two parameter groups, then Adam state (step + two moment groups) for the
// generator and the critic.
std::string serialize_checkpoint(const TrainState& state) {
  std::ostringstream os(std::ios::binary);
  BinaryWriter w(os);
  w.raw(kCheckpointMagic, 8);
  w.u32(kCheckpointFormatVersion);
  w.str(format_train_config(state.config));
  w.i64(state.global_step);
  w.i64(state.epoch);
  w.i64(state.batch_in_epoch);
  std::ostringstream rng;
  rng << state.rng;
  w.str(rng.str());
  write_param_set(w, state.generator);
  write_param_set(w, state.discriminator);
  write_adam(w, state.generator_opt);
  write_adam(w, state.discriminator_opt);
  return os.str();
}

TrainState deserialize_checkpoint(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  BinaryReader r(is);
  r.expect(std::string(kCheckpointMagic, 8));
  const uint32_t version = r.u32();
  if (version != kCheckpointFormatVersion)
    throw FormatError("unsupported checkpoint format version " + std::to_string(version));
  TrainState s;
  try {
    s.config = parse_train_config(r.str());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  s.global_step = r.i64();
  s.epoch = r.i64();
  s.batch_in_epoch = r.i64();
  std::istringstream rng(r.str());
  rng >> s.rng;
  if (!rng) throw FormatError("checkpoint rng state is malformed");

  const auto g_layout = generator_layout(s.config.model);
  const auto d_layout = discriminator_layout(s.config.model);
  s.generator = GeneratorParams{read_param_set(r)};
  check_layout(s.generator, g_layout, "generator");
  s.discriminator = DiscriminatorParams{read_param_set(r)};
  check_layout(s.discriminator, d_layout, "discriminator");
  s.generator_opt = read_adam(r, g_layout, "generator");
  s.discriminator_opt = read_adam(r, d_layout, "discriminator");
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint");
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const auto bytes = serialize_checkpoint(state);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path.string(), "cannot open checkpoint for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os.flush()) throw IoError(path.string(), "checkpoint write failed");
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string(), "cannot open checkpoint");
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace usgan
