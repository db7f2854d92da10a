#include <httplib.h>
#include <json.hpp>

#include <cmath>

#include "usgan/errors.hpp"
#include "usgan/evaluation.hpp"

namespace usgan {

using nlohmann::json;

namespace {

json encode_image(const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw DimensionError("images must be (3, H, W)");
  const auto flat = image.detach().to(torch::kFloat64).contiguous();
  const auto* p = flat.data_ptr<double>();
  return {{"shape", image.sizes().vec()}, {"data", std::vector<double>(p, p + flat.numel())}};
}

torch::Tensor decode_image(const json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data"))
    throw ProtocolError("image payload needs 'shape' and 'data'");
  const auto shape = j.at("shape").get<std::vector<int64_t>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 3 || shape[0] != 3 || shape[1] < 1 || shape[2] < 1 ||
      static_cast<int64_t>(data.size()) != shape[0] * shape[1] * shape[2])
    throw ProtocolError("image payload shape and data length disagree");
  return torch::tensor(data, torch::kFloat64).view(shape).to(torch::kFloat32);
}

}  // namespace

std::string encode_verification_request(const torch::Tensor& x, const torch::Tensor& y) {
  return json{{"image_a", encode_image(x)}, {"image_b", encode_image(y)}}.dump();
}

std::pair<torch::Tensor, torch::Tensor> decode_verification_request(const std::string& body) {
  try {
    const auto j = json::parse(body);
    return {decode_image(j.at("image_a")), decode_image(j.at("image_b"))};
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed verification request: ") + e.what());
  }
}

double HttpVerificationClient::similarity(const torch::Tensor& x, const torch::Tensor& y) {
  httplib::Client client(config_.host, config_.port);
  const auto secs = std::chrono::duration<double>(config_.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  if (!config_.token.empty()) client.set_bearer_token_auth(config_.token);

  const auto res = client.Post(config_.path, encode_verification_request(x, y), "application/json");
  if (!res)
    throw TransportError("verification request to " + config_.host + ":" +
                         std::to_string(config_.port) + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw ProtocolError("verification backend answered HTTP " + std::to_string(res->status));
  try {
    const auto j = json::parse(res->body);
    const auto& c = j.at("confidence");
    if (!c.is_number()) throw ProtocolError("'confidence' is not a number");
    return c.get<double>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed verification response: ") + e.what());
  }
}

MockVerificationServer::MockVerificationServer(std::shared_ptr<const Embedder> embedder,
                                               std::string required_token)
    : embedder_(std::move(embedder)), token_(std::move(required_token)) {}

MockVerificationServer::~MockVerificationServer() { stop(); }

int MockVerificationServer::start(int port) {
  if (server_) throw Error("mock verification server already started");
  server_ = std::make_unique<httplib::Server>();
  server_->Post("/verify", [this](const httplib::Request& req, httplib::Response& res) {
    if (!token_.empty() && req.get_header_value("Authorization") != "Bearer " + token_) {
      res.status = 401;
      res.set_content(R"({"error":"unauthorized"})", "application/json");
      return;
    }
    try {
      const auto [a, b] = decode_verification_request(req.body);
      const double score = mock_similarity(*embedder_, a, b);
      res.set_content(json{{"confidence", score}}.dump(), "application/json");
      ++served_;
    } catch (const Error& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  port_ = port == 0 ? server_->bind_to_any_port("127.0.0.1")
                    : (server_->bind_to_port("127.0.0.1", port) ? port : -1);
  if (port_ < 0) {
    server_.reset();
    throw TransportError("mock verification server cannot bind port " + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockVerificationServer::stop() {
  if (!server_) return;
  server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

}  // namespace usgan
