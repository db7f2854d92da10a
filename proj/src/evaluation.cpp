#include "usgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "usgan/errors.hpp"
#include "usgan/objectives.hpp"
#include "usgan/training.hpp"

namespace usgan {

namespace F = torch::nn::functional;

torch::Tensor PixelStatsEmbedder::embed(const torch::Tensor& image) const {
  if (image.dim() != 3 || image.size(0) != 3) throw DimensionError("embedder expects (3, H, W)");
  if (image.size(1) < thumb_ || image.size(2) < thumb_)
    throw DimensionError("image smaller than the embedder thumbnail");
  const auto img = image.detach().to(torch::kFloat64);
  const auto mean = img.mean({1, 2});
  const auto stddev = img.std({1, 2}, /*unbiased=*/false);
  const auto thumb = F::adaptive_avg_pool2d(img.unsqueeze(0), F::AdaptiveAvgPool2dFuncOptions(thumb_))
                         .flatten();
  return torch::cat({mean, stddev, thumb});
}

double acd_from_features(const torch::Tensor& fx, const torch::Tensor& fy) {
  if (fx.sizes() != fy.sizes()) throw DimensionError("feature vectors differ in length");
  return (fx.to(torch::kFloat64) - fy.to(torch::kFloat64)).pow(2).sum().item<double>();
}

double acd(const Embedder& embedder, const torch::Tensor& x, const torch::Tensor& y) {
  return acd_from_features(embedder.embed(x), embedder.embed(y));
}

double identity_drift(const torch::Tensor& x, const torch::Tensor& y) {
  if (x.sizes() != y.sizes()) throw DimensionError("drift needs tensors of equal shape");
  return (x.detach().to(torch::kFloat64) - y.detach().to(torch::kFloat64)).abs().mean().item<double>();
}

double mock_similarity(const Embedder& embedder, const torch::Tensor& x, const torch::Tensor& y) {
  return 100.0 * std::exp(-acd(embedder, x, y));
}

double verification_score(VerificationClient& client, const torch::Tensor& x, const torch::Tensor& y) {
  const double s = client.similarity(x, y);
  if (!(s >= 0.0 && s <= 100.0))
    throw ProtocolError("verification backend returned " + std::to_string(s) +
                        ", outside [0, 100]");
  return s;
}

ExpressionClassifier critic_classifier(DiscriminatorParams params, ModelConfig config) {
  return [params = std::move(params), config](const torch::Tensor& images) {
    torch::NoGradGuard no_grad;
    return discriminator_forward(params, images.to(torch::kFloat32), config).class_logits.argmax(1);
  };
}

DiscriminatorParams train_expression_classifier(const Dataset& data, const ModelConfig& config,
                                                uint64_t seed, int64_t steps, int64_t batch_size,
                                                double learning_rate) {
  if (data.num_classes != config.num_classes)
    throw ConfigError("classifier: dataset and model disagree on the class count");
  auto params = build_discriminator(config, seed);
  auto opt = AdamState::zeros_like(params);
  BatchStream stream(data, std::min(batch_size, data.size()), std::mt19937_64(seed ^ 0xc1a55u));
  Batch batch;
  for (int64_t step = 0; step < steps; ++step) {
    if (!stream.next(batch)) stream.next(batch);
    const auto p = DiscriminatorParams{params.requiring_grad()};
    const auto loss =
        classification_loss(discriminator_forward(p, batch.images, config).class_logits, batch.labels);
    require_finite(loss, "classifier loss");
    const auto grads = torch::autograd::grad({loss}, p.tensors(), {}, false, false, true);
    adam_update(params, grads, opt, learning_rate, 0.9, 0.999);
  }
  return params;
}

double expression_accuracy(const ExpressionClassifier& classifier, const torch::Tensor& images,
                           const torch::Tensor& target_ids) {
  if (images.size(0) != target_ids.numel())
    throw DimensionError("one target per image is required");
  if (images.size(0) == 0) throw ValidationError("expression accuracy of an empty set");
  const auto predicted = classifier(images).to(torch::kInt64).flatten();
  return (predicted == target_ids.to(torch::kInt64).flatten()).to(torch::kFloat64).mean().item<double>();
}

SurveyGrid survey_grid(const torch::Tensor& input, const std::vector<torch::Tensor>& variants,
                       std::mt19937_64& rng) {
  if (variants.size() < 2) throw ValidationError("a survey row needs at least 2 variants");
  if (input.dim() != 3 || input.size(0) != 3) throw DimensionError("input must be (3, D, D)");
  for (const auto& v : variants)
    if (v.sizes() != input.sizes())
      throw DimensionError("every variant must match the input image size");
  SurveyGrid grid;
  grid.order.resize(variants.size());
  std::iota(grid.order.begin(), grid.order.end(), 0);
  std::shuffle(grid.order.begin(), grid.order.end(), rng);
  std::vector<torch::Tensor> columns{input.detach()};
  for (auto i : grid.order) columns.push_back(variants[static_cast<std::size_t>(i)].detach());
  grid.composite = torch::cat(columns, 2);
  return grid;
}

std::string survey_manifest(const SurveyGrid& grid) {
  std::ostringstream os;
  os << "column,variant\n";
  for (std::size_t j = 0; j < grid.order.size(); ++j) os << j + 1 << ',' << grid.order[j] << '\n';
  return os.str();
}

torch::Tensor tile_images(const std::vector<std::vector<torch::Tensor>>& rows) {
  if (rows.empty() || rows.front().empty()) throw ValidationError("nothing to tile");
  std::vector<torch::Tensor> stripes;
  for (const auto& row : rows) {
    if (row.size() != rows.front().size()) throw DimensionError("grid rows differ in length");
    std::vector<torch::Tensor> cells;
    for (const auto& img : row) {
      if (img.sizes() != rows.front().front().sizes())
        throw DimensionError("grid cells differ in size");
      cells.push_back(img.detach());
    }
    stripes.push_back(torch::cat(cells, 2));
  }
  return torch::cat(stripes, 1);
}

}  // namespace usgan
