#include "usgan/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "usgan/errors.hpp"

namespace usgan {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("'" + key + "': cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
std::string fmt(int64_t v) { return std::to_string(v); }
std::string fmt(uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define USGAN_FIELD(NAME, DOC, TRAIN, TYPE, MEMBER)                                     \
  Field {                                                                               \
    ConfigKey{NAME, "", DOC, TRAIN},                                                    \
        [](RunConfig& c, const std::string& v) { c.MEMBER = parse_number<TYPE>(NAME, v); }, \
        [](const RunConfig& c) { return fmt(static_cast<TYPE>(c.MEMBER)); }             \
  }

#define USGAN_BOOL_FIELD(NAME, DOC, TRAIN, MEMBER)                                \
  Field {                                                                         \
    ConfigKey{NAME, "", DOC, TRAIN},                                              \
        [](RunConfig& c, const std::string& v) { c.MEMBER = parse_bool(NAME, v); }, \
        [](const RunConfig& c) { return fmt(c.MEMBER); }                          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t = {
        USGAN_FIELD("image_size", "image side D in pixels", true, int64_t, train.model.image_size),
        USGAN_FIELD("num_classes", "expression classes C", true, int64_t, train.model.num_classes),
        USGAN_FIELD("base_channels", "width of the first generator and critic layer", true,
                    int64_t, train.model.base_channels),
        USGAN_FIELD("residual_blocks", "residual blocks R in the generator bottleneck", true,
                    int64_t, train.model.num_residual_blocks),
        USGAN_BOOL_FIELD("ultimate_skip", "add the input image to the generator output", true,
                         train.model.use_ultimate_skip),
        USGAN_FIELD("discriminator_layers", "stride-2 critic trunk layers", true, int64_t,
                    train.model.discriminator_layers),
        USGAN_FIELD("lambda_cls", "classification loss weight", true, double,
                    train.weights.lambda_cls),
        USGAN_FIELD("lambda_rec", "cycle reconstruction loss weight", true, double,
                    train.weights.lambda_rec),
        USGAN_FIELD("lambda_gp", "gradient penalty weight", true, double, train.weights.lambda_gp),
        USGAN_FIELD("learning_rate", "Adam step size", true, double, train.learning_rate),
        USGAN_FIELD("beta1", "Adam first-moment decay", true, double, train.beta1),
        USGAN_FIELD("beta2", "Adam second-moment decay", true, double, train.beta2),
        USGAN_FIELD("batch_size", "images per batch", true, int64_t, train.batch_size),
        USGAN_FIELD("epochs", "passes over the training set", true, int64_t, train.epochs),
        USGAN_FIELD("n_critic", "critic updates per generator update", true, int64_t,
                    train.n_critic),
        USGAN_FIELD("seed", "seed for initialization, batching and sampling", true, uint64_t,
                    train.seed),
        USGAN_FIELD("checkpoint_every", "generator steps between checkpoints (0: final only)",
                    true, int64_t, train.checkpoint_every),
        USGAN_FIELD("log_every", "generator steps between log records (0: off)", true, int64_t,
                    train.log_every),
        USGAN_FIELD("max_steps", "stop after this many generator steps (0: no limit)", true,
                    int64_t, train.max_steps),
        USGAN_FIELD("lr_decay_epochs", "linear decay to 0 over the last N epochs (0: off)", true,
                    int64_t, train.lr_decay_epochs),
        USGAN_BOOL_FIELD("horizontal_flip", "random horizontal flips of training images", true,
                         train.horizontal_flip),
        USGAN_BOOL_FIELD("strict_deterministic", "single-threaded, bit-reproducible training",
                         true, train.strict_deterministic),
        Field{ConfigKey{"manifest", "", "dataset manifest (path,expression_id,subject_id)", false},
              [](RunConfig& c, const std::string& v) { c.manifest = v; },
              [](const RunConfig& c) { return c.manifest; }},
        USGAN_FIELD("train_fraction", "share of records used for training", false, double,
                    train_fraction),
        USGAN_FIELD("split_seed", "seed of the train/test split", false, uint64_t, split_seed),
        Field{ConfigKey{"split_mode", "", "record or subject (subject-disjoint split)", false},
              [](RunConfig& c, const std::string& v) {
                if (v == "record")
                  c.split_mode = SplitMode::record;
                else if (v == "subject")
                  c.split_mode = SplitMode::subject;
                else
                  throw ConfigError("'split_mode': expected record or subject, got '" + v + "'");
              },
              [](const RunConfig& c) {
                return std::string(c.split_mode == SplitMode::record ? "record" : "subject");
              }},
        Field{ConfigKey{"out_dir", "", "run directory for checkpoints, logs and outputs", false},
              [](RunConfig& c, const std::string& v) { c.out_dir = v; },
              [](const RunConfig& c) { return c.out_dir; }},
    };
    const RunConfig defaults;
    for (auto& f : t) f.key.default_value = f.get(defaults);
    return t;
  }();
  return table;
}

#undef USGAN_FIELD
#undef USGAN_BOOL_FIELD

RunConfig parse(std::string_view text, bool train_only) {
  RunConfig c;
  std::set<std::string> seen;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto where = "line " + std::to_string(lineno) + ": ";
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const auto key = trim(std::string_view(body).substr(0, eq));
    const auto value = trim(std::string_view(body).substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (f.key.name == key && (!train_only || f.key.train_only)) field = &f;
    if (!field) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      field->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return c;
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

RunConfig parse_run_config(std::string_view text) {
  auto c = parse(text, false);
  c.validate();
  return c;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(path.string(), "cannot open run config");
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_train_config(const TrainConfig& config) {
  RunConfig rc;
  rc.train = config;
  std::string out;
  for (const auto& f : fields())
    if (f.key.train_only) out += f.key.name + " = " + f.get(rc) + "\n";
  return out;
}

TrainConfig parse_train_config(std::string_view text) {
  auto c = parse(text, true).train;
  c.validate();
  return c;
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    out += "# " + f.key.doc + " (default " +
           (f.key.default_value.empty() ? std::string("empty") : f.key.default_value) + ")\n";
    out += f.key.name + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace usgan
