#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <torch/torch.h>

#include "usgan/data.hpp"
#include "usgan/model.hpp"

namespace httplib {
class Server;
}

namespace usgan {

/// Identity feature extractor φ. Must be deterministic for a given version.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string name() const = 0;
  virtual std::string version() const = 0;
  virtual int64_t dim() const = 0;
  /// (3, H, W) image in [-1, 1] -> (dim) float64 features.
  virtual torch::Tensor embed(const torch::Tensor& image) const = 0;
};

/// Desk-scale stand-in for a face-recognition embedding: per-channel mean and
/// standard deviation followed by an area-averaged `thumb` × `thumb` RGB
/// thumbnail, giving K = 6 + 3·thumb².
class PixelStatsEmbedder final : public Embedder {
 public:
  explicit PixelStatsEmbedder(int64_t thumb = 4) : thumb_(thumb) {}
  std::string name() const override { return "pixel-stats"; }
  std::string version() const override { return "1-thumb" + std::to_string(thumb_); }
  int64_t dim() const override { return 6 + 3 * thumb_ * thumb_; }
  torch::Tensor embed(const torch::Tensor& image) const override;

 private:
  int64_t thumb_;
};

/// ‖φ(x) − φ(y)‖₂².
double acd(const Embedder& embedder, const torch::Tensor& x, const torch::Tensor& y);
double acd_from_features(const torch::Tensor& fx, const torch::Tensor& fy);

/// Mean absolute pixel difference.
double identity_drift(const torch::Tensor& x, const torch::Tensor& y);

/// Face verification backend returning a similarity in [0, 100].
class VerificationClient {
 public:
  virtual ~VerificationClient() = default;
  virtual double similarity(const torch::Tensor& x, const torch::Tensor& y) = 0;
};

/// Calls `client` and enforces the [0, 100] contract (ProtocolError otherwise).
double verification_score(VerificationClient& client, const torch::Tensor& x, const torch::Tensor& y);

/// The mock backend's formula: 100·exp(−‖φ(x) − φ(y)‖²).
double mock_similarity(const Embedder& embedder, const torch::Tensor& x, const torch::Tensor& y);

struct HttpVerificationConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/verify";
  /// Sent as `Authorization: Bearer <token>` when non-empty.
  std::string token;
  double timeout_seconds = 10.0;
};

/// Minimal HTTP+JSON contract:
///
///     POST <path>  {"image_a": IMG, "image_b": IMG}
///     IMG = {"shape": [3, H, W], "data": [... H·W·3 floats in [-1, 1], CHW order]}
///     200          {"confidence": <0..100>}
///
/// Connection failures and timeouts raise TransportError; anything else that
/// is not a 200 with a numeric `confidence` raises ProtocolError.
class HttpVerificationClient final : public VerificationClient {
 public:
  explicit HttpVerificationClient(HttpVerificationConfig config) : config_(std::move(config)) {}
  double similarity(const torch::Tensor& x, const torch::Tensor& y) override;

 private:
  HttpVerificationConfig config_;
};

/// Request body of the verification contract.
std::string encode_verification_request(const torch::Tensor& x, const torch::Tensor& y);
/// Inverse of encode_verification_request; throws ProtocolError.
std::pair<torch::Tensor, torch::Tensor> decode_verification_request(const std::string& body);

/// In-process HTTP server implementing the verification contract with
/// mock_similarity. Serves on 127.0.0.1 from a background thread.
class MockVerificationServer {
 public:
  explicit MockVerificationServer(std::shared_ptr<const Embedder> embedder,
                                  std::string required_token = {});
  ~MockVerificationServer();
  MockVerificationServer(const MockVerificationServer&) = delete;
  MockVerificationServer& operator=(const MockVerificationServer&) = delete;

  /// Binds (port 0 picks a free one) and starts serving; returns the port.
  int start(int port = 0);
  void stop();
  int port() const { return port_; }
  int64_t requests_served() const { return served_.load(); }

 private:
  std::shared_ptr<const Embedder> embedder_;
  std::string token_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
  std::atomic<int64_t> served_{0};
};

/// Maps an image batch (N, 3, D, D) to predicted class ids (N).
using ExpressionClassifier = std::function<torch::Tensor(const torch::Tensor&)>;

/// argmax of the critic's class head.
ExpressionClassifier critic_classifier(DiscriminatorParams params, ModelConfig config);

/// Trains a fresh critic-shaped network on the class head alone (cross
/// entropy, Adam), independent of any GAN run.
DiscriminatorParams train_expression_classifier(const Dataset& data, const ModelConfig& config,
                                                uint64_t seed, int64_t steps,
                                                int64_t batch_size = 16,
                                                double learning_rate = 1e-3);

/// Fraction of images whose predicted class equals the target id.
double expression_accuracy(const ExpressionClassifier& classifier, const torch::Tensor& images,
                           const torch::Tensor& target_ids);

struct SurveyGrid {
  torch::Tensor composite;     ///< (3, D, (k + 1)·D), input leftmost
  std::vector<int64_t> order;  ///< order[j] = variant shown in column j + 1
};

/// Lays the input out on the left and the variants in a seeded random order
/// to its right.
SurveyGrid survey_grid(const torch::Tensor& input, const std::vector<torch::Tensor>& variants,
                       std::mt19937_64& rng);

/// `column,variant` lines recording the hidden order.
std::string survey_manifest(const SurveyGrid& grid);

/// Tiles equally sized (3, D, D) images into one (3, rows·D, cols·D) image.
torch::Tensor tile_images(const std::vector<std::vector<torch::Tensor>>& rows);

}  // namespace usgan
