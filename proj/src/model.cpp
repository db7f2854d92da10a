#include "usgan/model.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "usgan/errors.hpp"

namespace usgan {

namespace {

std::string shape_str(c10::IntArrayRef sizes) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < sizes.size(); ++i) os << (i ? ", " : "") << sizes[i];
  os << ')';
  return os.str();
}

void add_norm(ParamLayout& layout, const std::string& prefix, int64_t channels) {
  layout.push_back({prefix + ".weight", {channels}});
  layout.push_back({prefix + ".bias", {channels}});
}

void add_conv(ParamLayout& layout, const std::string& prefix, std::vector<int64_t> kernel_shape,
              int64_t bias_size) {
  layout.push_back({prefix + ".weight", std::move(kernel_shape)});
  layout.push_back({prefix + ".bias", {bias_size}});
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_norm_scale(std::string_view name) {
  return name.find("norm") != std::string_view::npos && ends_with(name, ".weight");
}

// Input taps feeding one output element of the convolution owning `name`.
int64_t fan_in(std::string_view name, const std::vector<int64_t>& shape) {
  const int64_t taps = shape[2] * shape[3];
  if (name.starts_with("dec")) return shape[0] * taps / 4;  // transposed, stride 2
  return shape[1] * taps;
}

ParamSet materialize(const ParamLayout& layout) {
  ParamSet params;
  for (const auto& [name, shape] : layout) params.add(name, torch::zeros(shape, torch::kFloat32));
  return params;
}

void initialize(ParamSet& params, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, tensor] : params.entries()) {
    if (is_norm_scale(name)) {
      tensor.fill_(1.0);
    } else if (ends_with(name, ".weight")) {
      const auto shape = tensor.sizes().vec();
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(fan_in(name, shape))));
      auto* data = tensor.data_ptr<float>();
      for (int64_t i = 0; i < tensor.numel(); ++i) data[i] = static_cast<float>(normal(rng));
    }
  }
}

torch::Tensor instance_norm(const ParamSet& p, const std::string& prefix, const torch::Tensor& x) {
  return torch::instance_norm(x, p.at(prefix + ".weight"), p.at(prefix + ".bias"), {}, {},
                              /*use_input_stats=*/true, /*momentum=*/0.0, kNormEps,
                              /*cudnn_enabled=*/false);
}

torch::Tensor conv(const ParamSet& p, const std::string& prefix, const torch::Tensor& x,
                   int64_t stride, int64_t padding) {
  return torch::conv2d(x, p.at(prefix + ".weight"), p.at(prefix + ".bias"), stride, padding);
}

torch::Tensor conv_norm_relu(const ParamSet& p, const std::string& name, const torch::Tensor& x,
                             int64_t stride, int64_t padding) {
  return torch::relu(instance_norm(p, name + ".norm", conv(p, name, x, stride, padding)));
}

torch::Tensor upconv_norm_relu(const ParamSet& p, const std::string& name, const torch::Tensor& x) {
  auto y = torch::conv_transpose2d(x, p.at(name + ".weight"), p.at(name + ".bias"), /*stride=*/2,
                                   /*padding=*/1);
  return torch::relu(instance_norm(p, name + ".norm", y));
}

torch::Tensor residual_block(const ParamSet& p, const std::string& name, const torch::Tensor& x) {
  auto h = torch::relu(instance_norm(p, name + ".norm1", conv(p, name + ".conv1", x, 1, 1)));
  h = instance_norm(p, name + ".norm2", conv(p, name + ".conv2", h, 1, 1));
  return h + x;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (num_classes < 2) fail("num_classes must be >= 2, got " + std::to_string(num_classes));
  if (num_residual_blocks < 0)
    fail("num_residual_blocks must be >= 0, got " + std::to_string(num_residual_blocks));
  if (base_channels < 1) fail("base_channels must be >= 1, got " + std::to_string(base_channels));
  if (discriminator_layers < 2 || discriminator_layers > 16)
    fail("discriminator_layers must be in [2, 16], got " + std::to_string(discriminator_layers));
  const int64_t stride = int64_t{1} << discriminator_layers;
  if (image_size < stride || image_size % stride != 0)
    fail("image_size must be a positive multiple of 2^discriminator_layers = " +
         std::to_string(stride) + ", got " + std::to_string(image_size));
}

void ParamSet::add(std::string name, torch::Tensor value) {
  if (contains(name)) throw FormatError("duplicate parameter name '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

const torch::Tensor& ParamSet::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  throw FormatError("no parameter named '" + std::string(name) + "'");
}

torch::Tensor& ParamSet::at(std::string_view name) {
  return const_cast<torch::Tensor&>(std::as_const(*this).at(name));
}

std::vector<torch::Tensor> ParamSet::tensors() const {
  std::vector<torch::Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [n, t] : entries_) out.add(n, t.detach().clone());
  return out;
}

ParamSet ParamSet::requiring_grad() const {
  ParamSet out;
  for (const auto& [n, t] : entries_) out.add(n, t.detach().requires_grad_(true));
  return out;
}

ParamSet ParamSet::to(torch::ScalarType dtype) const {
  ParamSet out;
  for (const auto& [n, t] : entries_) out.add(n, t.detach().to(dtype).clone());
  return out;
}

bool ParamSet::identical(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [na, a] = entries_[i];
    const auto& [nb, b] = other.entries_[i];
    if (na != nb || a.sizes() != b.sizes() || a.scalar_type() != b.scalar_type()) return false;
    const auto ca = a.contiguous();
    const auto cb = b.contiguous();
    if (std::memcmp(ca.data_ptr(), cb.data_ptr(), ca.nbytes()) != 0) return false;
  }
  return true;
}

ParamLayout generator_layout(const ModelConfig& config) {
  config.validate();
  const int64_t b = config.base_channels;
  const int64_t in = 3 + config.num_classes;
  ParamLayout layout;
  add_conv(layout, "enc1", {b, in, 7, 7}, b);
  add_norm(layout, "enc1.norm", b);
  add_conv(layout, "enc2", {2 * b, b, 4, 4}, 2 * b);
  add_norm(layout, "enc2.norm", 2 * b);
  add_conv(layout, "enc3", {4 * b, 2 * b, 4, 4}, 4 * b);
  add_norm(layout, "enc3.norm", 4 * b);
  for (int64_t r = 0; r < config.num_residual_blocks; ++r) {
    const std::string name = "res" + std::to_string(r);
    add_conv(layout, name + ".conv1", {4 * b, 4 * b, 3, 3}, 4 * b);
    add_norm(layout, name + ".norm1", 4 * b);
    add_conv(layout, name + ".conv2", {4 * b, 4 * b, 3, 3}, 4 * b);
    add_norm(layout, name + ".norm2", 4 * b);
  }
  // Transposed kernels are stored (in, out, k, k).
  add_conv(layout, "dec1", {4 * b, 2 * b, 4, 4}, 2 * b);
  add_norm(layout, "dec1.norm", 2 * b);
  add_conv(layout, "dec2", {2 * b, b, 4, 4}, b);
  add_norm(layout, "dec2.norm", b);
  add_conv(layout, "out", {3, b, 7, 7}, 3);
  return layout;
}

ParamLayout discriminator_layout(const ModelConfig& config) {
  config.validate();
  ParamLayout layout;
  int64_t in = 3;
  for (int64_t i = 0; i < config.discriminator_layers; ++i) {
    const int64_t out = config.base_channels << i;
    add_conv(layout, "trunk" + std::to_string(i), {out, in, 4, 4}, out);
    in = out;
  }
  const int64_t k = config.trunk_output_size();
  add_conv(layout, "realism", {1, in, 3, 3}, 1);
  add_conv(layout, "class", {config.num_classes, in, k, k}, config.num_classes);
  return layout;
}

void check_layout(const ParamSet& params, const ParamLayout& layout, std::string_view what) {
  const std::string w(what);
  if (params.size() != layout.size())
    throw FormatError(w + ": expected " + std::to_string(layout.size()) + " tensors, found " +
                      std::to_string(params.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, tensor] = params.entries()[i];
    if (name != layout[i].first)
      throw FormatError(w + ": tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                        layout[i].first + "'");
    if (tensor.sizes().vec() != layout[i].second)
      throw FormatError(w + ": '" + name + "' has shape " + shape_str(tensor.sizes()) +
                        ", expected " + shape_str(layout[i].second));
  }
}

GeneratorParams build_generator(const ModelConfig& config, uint64_t seed) {
  GeneratorParams p{materialize(generator_layout(config))};
  initialize(p, seed);
  return p;
}

DiscriminatorParams build_discriminator(const ModelConfig& config, uint64_t seed) {
  DiscriminatorParams p{materialize(discriminator_layout(config))};
  initialize(p, seed);
  return p;
}

GeneratorParams zero_generator(const ModelConfig& config) {
  return GeneratorParams{materialize(generator_layout(config))};
}

DiscriminatorParams zero_discriminator(const ModelConfig& config) {
  return DiscriminatorParams{materialize(discriminator_layout(config))};
}

void zero_output_layer(GeneratorParams& params) {
  torch::NoGradGuard no_grad;
  params.at("out.weight").zero_();
  params.at("out.bias").zero_();
}

int64_t count_parameters(const ParamSet& params) {
  int64_t n = 0;
  for (const auto& [name, t] : params.entries()) n += t.numel();
  return n;
}

void check_image_batch(const torch::Tensor& images, const ModelConfig& config) {
  const int64_t d = config.image_size;
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != d || images.size(3) != d)
    throw DimensionError("image batch must be (N, 3, " + std::to_string(d) + ", " +
                         std::to_string(d) + "), got " + shape_str(images.sizes()));
  if (images.size(0) < 1) throw DimensionError("image batch is empty");
  const auto data = images.detach();
  if (!torch::isfinite(data).all().item<bool>())
    throw ValidationError("image batch contains non-finite values");
  if (data.abs().max().item<double>() > 1.0)
    throw ValidationError("image batch values must lie in [-1, 1]");
}

void check_one_hot(const torch::Tensor& labels, int64_t num_classes) {
  if (labels.dim() != 2 || labels.size(1) != num_classes)
    throw DimensionError("labels must be (N, " + std::to_string(num_classes) + "), got " +
                         shape_str(labels.sizes()));
  const auto l = labels.detach().to(torch::kFloat64);
  const bool binary = ((l == 0) | (l == 1)).all().item<bool>();
  const bool single = (l.sum(1) == 1).all().item<bool>();
  if (!binary || !single) throw ValidationError("labels must be one-hot (a single 1 per row)");
}

torch::Tensor one_hot(const torch::Tensor& ids, int64_t num_classes, torch::ScalarType dtype) {
  const auto i = ids.to(torch::kInt64);
  if (i.numel() > 0 && (i.min().item<int64_t>() < 0 || i.max().item<int64_t>() >= num_classes))
    throw ValidationError("class id outside [0, " + std::to_string(num_classes) + ")");
  return torch::one_hot(i, num_classes).to(dtype);
}

torch::Tensor class_ids(const torch::Tensor& one_hot_labels) {
  return one_hot_labels.argmax(1).to(torch::kInt64);
}

GeneratorOutput generator_forward(const GeneratorParams& p, const torch::Tensor& x,
                                  const torch::Tensor& labels, const ModelConfig& config,
                                  ForwardTrace* trace) {
  check_image_batch(x, config);
  check_one_hot(labels, config.num_classes);
  if (labels.size(0) != x.size(0))
    throw DimensionError("got " + std::to_string(labels.size(0)) + " labels for " +
                         std::to_string(x.size(0)) + " images");
  auto record = [&](const char* name, const torch::Tensor& t) {
    if (trace) trace->record(name, t);
  };

  const int64_t d = config.image_size;
  const auto tiled = labels.to(x.scalar_type())
                         .view({x.size(0), config.num_classes, 1, 1})
                         .expand({x.size(0), config.num_classes, d, d});
  auto h = torch::cat({x, tiled}, 1);
  record("input", h);
  h = conv_norm_relu(p, "enc1", h, 1, 3);
  record("enc1", h);
  h = conv_norm_relu(p, "enc2", h, 2, 1);
  record("enc2", h);
  h = conv_norm_relu(p, "enc3", h, 2, 1);
  record("enc3", h);
  for (int64_t r = 0; r < config.num_residual_blocks; ++r) {
    const std::string name = "res" + std::to_string(r);
    h = residual_block(p, name, h);
    record(name.c_str(), h);
  }
  h = upconv_norm_relu(p, "dec1", h);
  record("dec1", h);
  h = upconv_norm_relu(p, "dec2", h);
  record("dec2", h);
  auto residual = torch::tanh(conv(p, "out", h, 1, 3));
  record("out", residual);

  if (!config.use_ultimate_skip) return {residual, residual};
  return {torch::clamp(residual + x, -1.0, 1.0), residual};
}

CriticOutput discriminator_forward(const DiscriminatorParams& p, const torch::Tensor& images,
                                   const ModelConfig& config, ForwardTrace* trace) {
  check_image_batch(images, config);
  auto h = images;
  for (int64_t i = 0; i < config.discriminator_layers; ++i) {
    const std::string name = "trunk" + std::to_string(i);
    h = torch::leaky_relu(conv(p, name, h, 2, 1), kLeakySlope);
    if (trace) trace->record(name, h);
  }
  auto realism_map = conv(p, "realism", h, 1, 1);
  auto logits = conv(p, "class", h, 1, 0);
  if (trace) {
    trace->record("realism", realism_map);
    trace->record("class", logits);
  }
  return {realism_map.mean({1, 2, 3}), logits.flatten(1)};
}

}  // namespace usgan
