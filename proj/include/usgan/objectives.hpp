#pragma once

#include <functional>
#include <random>

#include <torch/torch.h>

#include "usgan/model.hpp"

namespace usgan {

struct LossWeights {
  double lambda_cls = 1.0;
  double lambda_rec = 10.0;
  double lambda_gp = 10.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Scalar loss values of one training step. Fields a step does not compute
/// stay 0 (critic steps leave rec / cls_fake / total_g at 0 and vice versa).
struct LossReport {
  double adv = 0.0;
  double rec = 0.0;
  double cls_fake = 0.0;
  double cls_real = 0.0;
  double gp = 0.0;
  double total_g = 0.0;
  double total_d = 0.0;
};

/// Critic realism score as a function of an image batch, returning (N).
using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// Mean over samples of (||d critic(x̄) / d x̄||₂ − 1)² at x̄ = ε·x + (1 − ε)·y.
///
/// `eps` holds one interpolation weight per sample. The result stays attached
/// to the graph (the input gradient is built with create_graph), so it can be
/// differentiated again with respect to whatever the critic closes over.
/// Throws NumericalError when the input gradient is not finite.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& x, const torch::Tensor& y,
                               const torch::Tensor& eps);

/// Draws ε ~ U[0, 1] per sample from `rng`, then as above.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& x, const torch::Tensor& y,
                               std::mt19937_64& rng);

torch::Tensor gradient_penalty(const DiscriminatorParams& d, const ModelConfig& config,
                               const torch::Tensor& x, const torch::Tensor& y, std::mt19937_64& rng);

/// One interpolation weight per sample, ε ~ U[0, 1).
torch::Tensor draw_interpolation_weights(int64_t n, std::mt19937_64& rng,
                                         torch::ScalarType dtype = torch::kFloat32);

struct AdversarialTerms {
  torch::Tensor critic_gain;  ///< mean D_I(real) − mean D_I(fake)
  torch::Tensor gen_gain;     ///< mean D_I(fake)
};

AdversarialTerms adversarial_terms(const torch::Tensor& d_real, const torch::Tensor& d_fake);

/// Mean absolute difference over every element of the batch.
torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat);

/// Batch-mean cross entropy of `logits` (N, C) against one-hot `targets` (N, C).
torch::Tensor classification_loss(const torch::Tensor& logits, const torch::Tensor& targets);

template <class T>
struct CriticTerms {
  T critic_gain;
  T gp;
  T cls_real;
};

template <class T>
struct GeneratorTerms {
  T gen_gain;
  T cls_fake;
  T rec;
};

/// L_D = −(critic_gain − λ_gp·gp) + λ_C·cls_real.
template <class T>
T discriminator_objective(const CriticTerms<T>& t, const LossWeights& w) {
  return -(t.critic_gain - t.gp * w.lambda_gp) + t.cls_real * w.lambda_cls;
}

/// L_G = −gen_gain + λ_C·cls_fake + λ_R·rec.
template <class T>
T generator_objective(const GeneratorTerms<T>& t, const LossWeights& w) {
  return -t.gen_gain + t.cls_fake * w.lambda_cls + t.rec * w.lambda_rec;
}

/// Throws NumericalError naming `what` if `value` is not finite.
void require_finite(const torch::Tensor& value, const char* what);

}  // namespace usgan
