#include "usgan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "usgan/errors.hpp"

namespace usgan {

void TrainConfig::validate() const {
  model.validate();
  weights.validate();
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (!(learning_rate >= 0)) fail("learning_rate must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1)) fail("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) fail("beta2 must lie in [0, 1)");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (n_critic < 1) fail("n_critic must be >= 1");
  if (checkpoint_every < 0 || log_every < 0 || max_steps < 0 || lr_decay_epochs < 0)
    fail("step and epoch counts must be >= 0");
}

AdamState AdamState::zeros_like(const ParamSet& params) {
  AdamState s;
  for (const auto& [name, t] : params.entries()) {
    s.exp_avg.add(name, torch::zeros_like(t));
    s.exp_avg_sq.add(name, torch::zeros_like(t));
  }
  return s;
}

void adam_update(ParamSet& params, const std::vector<torch::Tensor>& grads, AdamState& state,
                 double lr, double beta1, double beta2) {
  if (grads.size() != params.size() || state.exp_avg.size() != params.size())
    throw DimensionError("adam: parameter, gradient and state counts differ");
  torch::NoGradGuard no_grad;
  ++state.step;
  const double bias1 = 1.0 - std::pow(beta1, double(state.step));
  const double bias2 = 1.0 - std::pow(beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.entries()[i].second;
    auto& m = state.exp_avg.entries()[i].second;
    auto& v = state.exp_avg_sq.entries()[i].second;
    const auto g = grads[i].defined() ? grads[i] : torch::zeros_like(p);
    m.mul_(beta1).add_(g, 1.0 - beta1);
    v.mul_(beta2).addcmul_(g, g, 1.0 - beta2);
    const auto denom = (v / bias2).sqrt_().add_(kAdamEps);
    p.addcdiv_(m, denom, -lr / bias1);
  }
}

TrainState TrainState::initialize(const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.config = config;
  // Distinct streams for the two networks and the sampler, all derived from the seed.
  s.generator = build_generator(config.model, config.seed * 3 + 1);
  s.discriminator = build_discriminator(config.model, config.seed * 3 + 2);
  s.generator_opt = AdamState::zeros_like(s.generator);
  s.discriminator_opt = AdamState::zeros_like(s.discriminator);
  s.rng.seed(config.seed * 3 + 3);
  return s;
}

torch::Tensor sample_target_labels(const torch::Tensor& labels, std::mt19937_64& rng) {
  if (labels.dim() != 2 || labels.size(0) < 1) throw DimensionError("need a non-empty (B, C) batch");
  std::vector<int64_t> perm(static_cast<std::size_t>(labels.size(0)));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return labels.index_select(0, torch::tensor(perm, torch::kInt64));
}

torch::Tensor cycle_reconstruct(const GeneratorParams& g, const torch::Tensor& y,
                                const torch::Tensor& c_o, const ModelConfig& config) {
  return generator_forward(g, y, c_o, config).output;
}

namespace {

std::string describe(const LossReport& r) {
  std::ostringstream os;
  os << "adv=" << r.adv << " rec=" << r.rec << " cls_fake=" << r.cls_fake
     << " cls_real=" << r.cls_real << " gp=" << r.gp;
  return os.str();
}

double lr_for(const TrainState& s) { return scheduled_learning_rate(s.config, s.epoch); }

}  // namespace

torch::Tensor critic_loss(const DiscriminatorParams& d, const GeneratorParams& g,
                          const TrainConfig& cfg, const torch::Tensor& x, const torch::Tensor& c_o,
                          const torch::Tensor& c_t, const torch::Tensor& eps, LossReport* report) {
  torch::Tensor y;
  {
    torch::NoGradGuard no_grad;
    y = generator_forward(g, x, c_t, cfg.model).output;
  }
  require_finite(y, "generated batch");
  const auto real = discriminator_forward(d, x, cfg.model);
  const auto fake = discriminator_forward(d, y, cfg.model);
  const auto adv = adversarial_terms(real.realism, fake.realism);
  const auto gp = gradient_penalty(
      [&](const torch::Tensor& v) { return discriminator_forward(d, v, cfg.model).realism; }, x, y,
      eps);
  const auto cls_real = classification_loss(real.class_logits, c_o);
  if (report) {
    report->adv = adv.critic_gain.item<double>();
    report->gp = gp.item<double>();
    report->cls_real = cls_real.item<double>();
    report->total_d = discriminator_objective(
        CriticTerms<double>{report->adv, report->gp, report->cls_real}, cfg.weights);
  }
  return discriminator_objective(CriticTerms<torch::Tensor>{adv.critic_gain, gp, cls_real},
                                 cfg.weights);
}

torch::Tensor generator_loss(const GeneratorParams& g, const DiscriminatorParams& d,
                             const TrainConfig& cfg, const torch::Tensor& x,
                             const torch::Tensor& c_o, const torch::Tensor& c_t,
                             LossReport* report) {
  const auto y = generator_forward(g, x, c_t, cfg.model).output;
  require_finite(y, "generated batch");
  const auto x_hat = cycle_reconstruct(g, y, c_o, cfg.model);
  const auto fake = discriminator_forward(d, y, cfg.model);
  const auto gen_gain = adversarial_terms(fake.realism, fake.realism).gen_gain;
  const auto cls_fake = classification_loss(fake.class_logits, c_t);
  const auto rec = reconstruction_loss(x, x_hat);
  if (report) {
    report->adv = gen_gain.item<double>();
    report->cls_fake = cls_fake.item<double>();
    report->rec = rec.item<double>();
    report->total_g = generator_objective(
        GeneratorTerms<double>{report->adv, report->cls_fake, report->rec}, cfg.weights);
  }
  return generator_objective(GeneratorTerms<torch::Tensor>{gen_gain, cls_fake, rec}, cfg.weights);
}

LossReport train_step_critic(TrainState& state, const Batch& batch, std::mt19937_64& rng) {
  const auto& cfg = state.config;
  const auto c_t = sample_target_labels(batch.labels, rng);
  const auto eps = draw_interpolation_weights(batch.images.size(0), rng, batch.images.scalar_type());
  const auto d = DiscriminatorParams{state.discriminator.requiring_grad()};
  LossReport r;
  const auto total = critic_loss(d, state.generator, cfg, batch.images, batch.labels, c_t, eps, &r);
  if (!std::isfinite(total.item<double>()))
    throw NumericalError("critic loss is not finite at step " + std::to_string(state.global_step) +
                         ": " + describe(r));

  auto grads = torch::autograd::grad({total}, d.tensors(), {}, false, false, true);
  for (const auto& g : grads)
    if (g.defined()) require_finite(g, "critic gradient");
  adam_update(state.discriminator, grads, state.discriminator_opt, lr_for(state), cfg.beta1,
              cfg.beta2);
  return r;
}

LossReport train_step_generator(TrainState& state, const Batch& batch, std::mt19937_64& rng) {
  const auto& cfg = state.config;
  const auto c_t = sample_target_labels(batch.labels, rng);
  const auto g = GeneratorParams{state.generator.requiring_grad()};
  LossReport r;
  const auto total =
      generator_loss(g, state.discriminator, cfg, batch.images, batch.labels, c_t, &r);
  if (!std::isfinite(total.item<double>()))
    throw NumericalError("generator loss is not finite at step " +
                         std::to_string(state.global_step) + ": " + describe(r));

  auto grads = torch::autograd::grad({total}, g.tensors(), {}, false, false, true);
  for (const auto& gr : grads)
    if (gr.defined()) require_finite(gr, "generator gradient");
  adam_update(state.generator, grads, state.generator_opt, lr_for(state), cfg.beta1, cfg.beta2);
  return r;
}

double scheduled_learning_rate(const TrainConfig& config, int64_t epoch) {
  if (config.lr_decay_epochs <= 0) return config.learning_rate;
  const int64_t start = config.epochs - config.lr_decay_epochs;
  if (epoch < start) return config.learning_rate;
  return config.learning_rate * double(config.epochs - epoch) / double(config.lr_decay_epochs);
}

std::string LogRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["adv"] = critic.adv;
  j["rec"] = generator.rec;
  j["cls_fake"] = generator.cls_fake;
  j["cls_real"] = critic.cls_real;
  j["gp"] = critic.gp;
  j["total_g"] = generator.total_g;
  j["total_d"] = critic.total_d;
  j["gen_adv"] = generator.adv;
  j["wall_time"] = wall_seconds;
  return j.dump();
}

namespace {

// Batch order of an epoch depends only on (seed, epoch), so a resumed run
// replays it by skipping the batches already consumed.
std::mt19937_64 epoch_rng(uint64_t seed, int64_t epoch) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(epoch), 0xba7c4u};
  return std::mt19937_64(seq);
}

class ThreadScope {
 public:
  explicit ThreadScope(bool single) : saved_(torch::get_num_threads()) {
    if (single) torch::set_num_threads(1);
  }
  ~ThreadScope() { torch::set_num_threads(saved_); }

 private:
  int saved_;
};

}  // namespace

TrainState train(const TrainConfig& config, const Dataset& data, const TrainOptions& options) {
  return resume(TrainState::initialize(config), data, options);
}

TrainState resume(TrainState state, const Dataset& data, const TrainOptions& options) {
  const auto& cfg = state.config;
  cfg.validate();
  if (data.size() < 1) throw ValidationError("training set is empty");
  if (data.num_classes != cfg.model.num_classes)
    throw ConfigError("dataset has " + std::to_string(data.num_classes) +
                      " classes, model expects " + std::to_string(cfg.model.num_classes));
  if (data.images.size(2) != cfg.model.image_size)
    throw ConfigError("dataset images are " + std::to_string(data.images.size(2)) +
                      " px, model expects " + std::to_string(cfg.model.image_size));
  if (data.size() < cfg.batch_size)
    throw ConfigError("training set has fewer images than one batch");

  ThreadScope threads(cfg.strict_deterministic);
  const bool write = !options.out_dir.empty();
  std::ofstream log;
  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir / "checkpoints", ec);
    if (ec) throw IoError(options.out_dir.string(), "cannot create run directory: " + ec.message());
    const auto log_path = options.out_dir / "train_log.jsonl";
    log.open(log_path, std::ios::app);
    if (!log) throw IoError(log_path.string(), "cannot open training log");
  }
  auto checkpoint = [&](const std::filesystem::path& path) {
    if (write) save_checkpoint(path, state);
    if (options.on_checkpoint) options.on_checkpoint(state);
  };

  const auto start = std::chrono::steady_clock::now();
  auto budget_left = [&] { return cfg.max_steps == 0 || state.global_step < cfg.max_steps; };

  try {
    while (state.epoch < cfg.epochs && budget_left()) {
      BatchStream stream(data, cfg.batch_size, epoch_rng(cfg.seed, state.epoch), cfg.horizontal_flip);
      Batch batch;
      for (int64_t i = 0; i < state.batch_in_epoch; ++i) stream.next(batch);
      while (budget_left() && stream.next(batch)) {
        LogRecord rec;
        for (int64_t k = 0; k < cfg.n_critic; ++k)
          rec.critic = train_step_critic(state, batch, state.rng);
        rec.generator = train_step_generator(state, batch, state.rng);
        ++state.global_step;
        ++state.batch_in_epoch;

        if (cfg.log_every > 0 && state.global_step % cfg.log_every == 0) {
          rec.step = state.global_step;
          rec.epoch = state.epoch;
          rec.wall_seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          if (log) log << rec.to_json_line() << '\n' << std::flush;
          if (options.on_log) options.on_log(rec);
        }
        if (cfg.checkpoint_every > 0 && state.global_step % cfg.checkpoint_every == 0)
          checkpoint(options.out_dir / "checkpoints" /
                     ("step_" + std::to_string(state.global_step) + ".ckpt"));
      }
      if (state.batch_in_epoch >= stream.batches_per_epoch()) {
        ++state.epoch;
        state.batch_in_epoch = 0;
      }
    }
  } catch (const NumericalError& e) {
    std::string crash;
    if (write) {
      crash = (options.out_dir / "crash.ckpt").string();
      save_checkpoint(crash, state);
    }
    throw DivergenceError(e.what(), crash);
  }
  checkpoint(options.out_dir / "final.ckpt");
  return state;
}

}  // namespace usgan
