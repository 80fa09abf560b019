#include <cmath>

#include "tabseq/blocks.h"
#include "tabseq/error.h"
#include "tabseq/ops.h"
#include "tabseq/tape.h"

namespace tabseq::nn {

ParameterList Module::parameters(const std::string& prefix) const {
  ParameterList out;
  collect_parameters(prefix, out);
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return x;
    case Activation::kTanh:
      return tanh(x);
    case Activation::kRelu:
      return relu(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kSilu:
      return silu(x);
  }
  return x;
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "silu") return Activation::kSilu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kSilu:
      return "silu";
  }
  return "?";
}

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(in, 1)));
  weight = uniform({in, out}, bound, rng);
  bias = uniform({out}, bound, rng);
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight, bias); }

void Linear::collect_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "weight", weight});
  out.push_back({prefix + "bias", bias});
}

LayerNorm::LayerNorm(std::size_t width)
    : gamma(Tensor::ones({width}, true)), beta(Tensor::zeros({width}, true)) {}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }

void LayerNorm::collect_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "gamma", gamma});
  out.push_back({prefix + "beta", beta});
}

Tensor pool_mean(const Tensor& h) {
  if (h.rank() != 3 || h.dim(1) == 0) {
    throw DimensionError("pool_mean expects (N, J>=1, h), got " + to_string(h.shape()));
  }
  RegionScope region("pool");
  return mean(h, 1);
}

MLP::MLP(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, std::mt19937_64& rng) {
  std::size_t prev = in;
  for (auto width : hidden) {
    layers.emplace_back(prev, width, rng);
    prev = width;
  }
  layers.emplace_back(prev, out, rng);
}

Tensor MLP::forward(const Tensor& x) const {
  RegionScope region("mlp");
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

void MLP::collect_parameters(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect_parameters(prefix + "layers." + std::to_string(i) + ".", out);
  }
}

ResNet::ResNet(std::size_t in, std::size_t width, std::size_t bottleneck, std::size_t count, std::size_t out,
               std::mt19937_64& rng)
    : input(in, width, rng) {
  for (std::size_t i = 0; i < count; ++i) {
    Block b;
    b.norm = LayerNorm(width);
    b.down = Linear(width, bottleneck, rng);
    b.up = Linear(bottleneck, width, rng);
    blocks.push_back(std::move(b));
  }
  final_norm = LayerNorm(width);
  output = Linear(width, out, rng);
}

Tensor ResNet::forward(const Tensor& x) const {
  RegionScope region("resnet");
  Tensor h = input.forward(x);
  for (const auto& b : blocks) {
    h = add(h, b.up.forward(relu(b.down.forward(b.norm.forward(h)))));
  }
  return output.forward(relu(final_norm.forward(h)));
}

void ResNet::collect_parameters(const std::string& prefix, ParameterList& out) const {
  input.collect_parameters(prefix + "input.", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto p = prefix + "blocks." + std::to_string(i) + ".";
    blocks[i].norm.collect_parameters(p + "norm.", out);
    blocks[i].down.collect_parameters(p + "down.", out);
    blocks[i].up.collect_parameters(p + "up.", out);
  }
  final_norm.collect_parameters(prefix + "final_norm.", out);
  output.collect_parameters(prefix + "output.", out);
}

TaskHead::TaskHead(std::size_t in, std::size_t width, std::mt19937_64& rng)
    : hidden(in, width, rng), output(width, 1, rng) {}

Tensor TaskHead::forward(const Tensor& x) const {
  RegionScope region("head");
  return output.forward(relu(hidden.forward(x)));
}

void TaskHead::collect_parameters(const std::string& prefix, ParameterList& out) const {
  hidden.collect_parameters(prefix + "hidden.", out);
  output.collect_parameters(prefix + "output.", out);
}

}  // namespace tabseq::nn
