#include "usgan/objectives.hpp"

#include <string>

#include "usgan/errors.hpp"

namespace usgan {

void LossWeights::validate() const {
  if (!(lambda_cls >= 0) || !(lambda_rec >= 0) || !(lambda_gp >= 0))
    throw ConfigError("loss weights must be >= 0");
}

void require_finite(const torch::Tensor& value, const char* what) {
  if (!torch::isfinite(value.detach()).all().item<bool>())
    throw NumericalError(std::string(what) + " is not finite");
}

torch::Tensor draw_interpolation_weights(int64_t n, std::mt19937_64& rng, torch::ScalarType dtype) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto eps = torch::empty({n}, torch::kFloat64);
  auto* p = eps.data_ptr<double>();
  for (int64_t i = 0; i < n; ++i) p[i] = uniform(rng);
  return eps.to(dtype);
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& x, const torch::Tensor& y,
                               const torch::Tensor& eps) {
  if (x.sizes() != y.sizes())
    throw DimensionError("gradient penalty needs real and fake batches of equal shape");
  if (eps.dim() != 1 || eps.size(0) != x.size(0))
    throw DimensionError("one interpolation weight per sample is required");

  const auto w = eps.to(x.scalar_type()).view({-1, 1, 1, 1});
  auto mixed = (w * x.detach() + (1 - w) * y.detach()).requires_grad_(true);
  auto score = critic(mixed);
  // A critic that ignores its input has an identically zero gradient.
  torch::Tensor g;
  if (score.requires_grad()) {
    auto grads = torch::autograd::grad({score.sum()}, {mixed}, /*grad_outputs=*/{},
                                       /*retain_graph=*/true, /*create_graph=*/true,
                                       /*allow_unused=*/true);
    g = grads[0];
  }
  if (!g.defined()) g = torch::zeros_like(mixed);
  const auto norms = g.flatten(1).norm(2, 1);
  if (!torch::isfinite(norms.detach()).all().item<bool>())
    throw NumericalError("gradient penalty: critic input gradient is not finite (max |g| = " +
                         std::to_string(g.detach().abs().max().item<double>()) + ")");
  return (norms - 1).pow(2).mean();
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& x, const torch::Tensor& y,
                               std::mt19937_64& rng) {
  return gradient_penalty(critic, x, y, draw_interpolation_weights(x.size(0), rng, x.scalar_type()));
}

torch::Tensor gradient_penalty(const DiscriminatorParams& d, const ModelConfig& config,
                               const torch::Tensor& x, const torch::Tensor& y, std::mt19937_64& rng) {
  return gradient_penalty(
      [&](const torch::Tensor& v) { return discriminator_forward(d, v, config).realism; }, x, y, rng);
}

AdversarialTerms adversarial_terms(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  return {d_real.mean() - d_fake.mean(), d_fake.mean()};
}

torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat) {
  if (x.sizes() != x_hat.sizes())
    throw DimensionError("reconstruction loss needs tensors of equal shape");
  return (x - x_hat).abs().mean();
}

torch::Tensor classification_loss(const torch::Tensor& logits, const torch::Tensor& targets) {
  if (logits.dim() != 2) throw DimensionError("logits must be (N, C)");
  check_one_hot(targets, logits.size(1));
  if (targets.size(0) != logits.size(0)) throw DimensionError("one target per logit row required");
  const auto log_probs = torch::log_softmax(logits, 1);
  return -log_probs.gather(1, class_ids(targets).view({-1, 1})).mean();
}

}  // namespace usgan
