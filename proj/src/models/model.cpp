#include <numeric>

#include "tabseq/error.h"
#include "tabseq/models.h"
#include "tabseq/ops.h"
#include "tabseq/tape.h"

namespace tabseq::models {

Family parse_family(std::string_view name) {
  for (auto f : all_families()) {
    if (name == to_string(f)) return f;
  }
  throw ConfigError("unknown model family '" + std::string(name) + "'");
}

std::string_view to_string(Family family) {
  switch (family) {
    case Family::kTabulaRNN:
      return "TabulaRNN";
    case Family::kMambular:
      return "Mambular";
    case Family::kMambAttention:
      return "MambAttention";
    case Family::kFTTransformer:
      return "FTTransformer";
    case Family::kMLP:
      return "MLP";
    case Family::kResNet:
      return "ResNet";
  }
  return "?";
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> families{Family::kTabulaRNN,     Family::kMambular, Family::kMambAttention,
                                            Family::kFTTransformer, Family::kMLP,      Family::kResNet};
  return families;
}

bool is_sequence_model(Family family) { return family != Family::kMLP && family != Family::kResNet; }

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kRNN:
      return "rnn";
    case LayerKind::kSSM:
      return "ssm";
    case LayerKind::kAttention:
      return "attention";
  }
  return "?";
}

void ModelSpec::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(layers, "layers");
  positive(head_hidden, "head_hidden");
  if (is_sequence_model(family)) positive(d, "d");
  switch (family) {
    case Family::kTabulaRNN:
      positive(rnn_hidden, "rnn_hidden");
      break;
    case Family::kMambAttention:
      if (layers < 3 || layers % 2 == 0) {
        throw ConfigError("MambAttention needs an odd layer count >= 3 so that SSM blocks open and close the "
                          "alternation, got " + std::to_string(layers));
      }
      [[fallthrough]];
    case Family::kFTTransformer:
      if (heads == 0 || d % heads != 0) {
        throw ConfigError("head count " + std::to_string(heads) + " does not divide d = " + std::to_string(d));
      }
      positive(ffn_hidden, "ffn_hidden");
      if (family == Family::kFTTransformer) break;
      [[fallthrough]];
    case Family::kMambular:
      positive(state, "state");
      break;
    case Family::kMLP:
    case Family::kResNet:
      positive(width, "width");
      break;
  }
}

ModelSpec default_spec(Family family, Task task) {
  ModelSpec spec;
  spec.family = family;
  spec.task = task;
  switch (family) {
    case Family::kMambAttention:
      spec.layers = 5;
      break;
    case Family::kMLP:
      spec.layers = 3;
      break;
    default:
      spec.layers = 4;
      break;
  }
  return spec;
}

nlohmann::json to_json(const ModelSpec& spec) {
  return {
      {"family", to_string(spec.family)},
      {"task", to_string(spec.task)},
      {"d", spec.d},
      {"layers", spec.layers},
      {"state", spec.state},
      {"heads", spec.heads},
      {"rnn_hidden", spec.rnn_hidden},
      {"head_hidden", spec.head_hidden},
      {"ffn_hidden", spec.ffn_hidden},
      {"width", spec.width},
      {"bottleneck", spec.bottleneck},
      {"cell", nn::to_string(spec.cell)},
      {"rnn_activation", nn::to_string(spec.rnn_activation)},
      {"scan", nn::to_string(spec.scan)},
      {"per_channel_delta", spec.per_channel_delta},
  };
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model spec must be a JSON object");
  if (!j.contains("family")) throw ConfigError("model spec needs a 'family'");
  try {
    const Task task = j.contains("task") ? parse_task(j.at("task").get<std::string>()) : Task::kRegression;
    ModelSpec spec = default_spec(parse_family(j.at("family").get<std::string>()), task);
    for (const auto& [key, value] : j.items()) {
      if (key == "family" || key == "task") continue;
      if (key == "d") spec.d = value.get<std::size_t>();
      else if (key == "layers") spec.layers = value.get<std::size_t>();
      else if (key == "state") spec.state = value.get<std::size_t>();
      else if (key == "heads") spec.heads = value.get<std::size_t>();
      else if (key == "rnn_hidden") spec.rnn_hidden = value.get<std::size_t>();
      else if (key == "head_hidden") spec.head_hidden = value.get<std::size_t>();
      else if (key == "ffn_hidden") spec.ffn_hidden = value.get<std::size_t>();
      else if (key == "width") spec.width = value.get<std::size_t>();
      else if (key == "bottleneck") spec.bottleneck = value.get<std::size_t>();
      else if (key == "cell") spec.cell = nn::parse_cell(value.get<std::string>());
      else if (key == "rnn_activation") spec.rnn_activation = nn::parse_activation(value.get<std::string>());
      else if (key == "scan") spec.scan = nn::parse_scan_mode(value.get<std::string>());
      else if (key == "per_channel_delta") spec.per_channel_delta = value.get<bool>();
      else throw ConfigError("unknown model spec key '" + key + "'");
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model spec: ") + e.what());
  }
}

Model build(const ModelSpec& spec, const encoding::FeatureLayout& layout, std::mt19937_64& rng) {
  spec.validate();
  if (layout.feature_count() == 0) throw ConfigError("cannot build a model for zero features");
  Model m;
  m.spec_ = spec;
  m.layout_ = layout;
  switch (spec.family) {
    case Family::kMLP: {
      const std::size_t in = layout.ple_width() + layout.one_hot_width();
      m.mlp = nn::MLP(in, std::vector<std::size_t>(spec.layers, spec.width), 1, rng);
      return m;
    }
    case Family::kResNet: {
      const std::size_t in = layout.ple_width() + layout.one_hot_width();
      const std::size_t inner = spec.bottleneck == 0 ? spec.width : spec.bottleneck;
      m.resnet = nn::ResNet(in, spec.width, inner, spec.layers, 1, rng);
      return m;
    }
    default:
      break;
  }
  m.embedding = nn::FeatureEmbedding(layout, spec.d, rng);
  std::size_t width = spec.d;
  for (std::size_t i = 0; i < spec.layers; ++i) {
    Model::Layer layer;
    switch (spec.family) {
      case Family::kTabulaRNN:
        layer.kind = LayerKind::kRNN;
        layer.rnn = nn::RNNLayer(width, spec.rnn_hidden, spec.cell, spec.rnn_activation, rng);
        width = spec.rnn_hidden;
        break;
      case Family::kMambular:
        layer.kind = LayerKind::kSSM;
        break;
      case Family::kMambAttention:
        layer.kind = i % 2 == 0 ? LayerKind::kSSM : LayerKind::kAttention;
        break;
      case Family::kFTTransformer:
        layer.kind = LayerKind::kAttention;
        break;
      default:
        break;
    }
    if (layer.kind == LayerKind::kSSM) {
      layer.norm = nn::LayerNorm(spec.d);
      layer.ssm = nn::SSMBlock(spec.d, spec.state, spec.per_channel_delta, rng);
    } else if (layer.kind == LayerKind::kAttention) {
      layer.attention = nn::AttentionBlock(spec.d, spec.heads, spec.ffn_hidden, rng);
    }
    m.layers.push_back(std::move(layer));
  }
  if (spec.family != Family::kTabulaRNN) m.final_norm = nn::LayerNorm(spec.d);
  m.head = nn::TaskHead(width, spec.head_hidden, rng);
  return m;
}

std::vector<LayerKind> Model::pattern() const {
  std::vector<LayerKind> out;
  for (const auto& l : layers) out.push_back(l.kind);
  return out;
}

Tensor Model::forward(const nn::Batch& batch) const {
  if (spec_.family == Family::kMLP) return mlp.forward(nn::flatten_inputs(batch, layout_));
  if (spec_.family == Family::kResNet) return resnet.forward(nn::flatten_inputs(batch, layout_));
  Tensor x = embedding.forward(batch);
  for (const auto& layer : layers) {
    switch (layer.kind) {
      case LayerKind::kRNN:
        x = layer.rnn.forward(x);
        break;
      case LayerKind::kSSM: {
        RegionScope region("ssm");
        x = add(x, layer.ssm.forward(layer.norm.forward(x), spec_.scan));
        break;
      }
      case LayerKind::kAttention:
        x = layer.attention.forward(x);
        break;
    }
  }
  if (final_norm.gamma.defined()) {
    RegionScope region("pool");
    x = final_norm.forward(x);
  }
  return head.forward(nn::pool_mean(x));
}

void Model::collect_parameters(const std::string& prefix, nn::ParameterList& out) const {
  if (spec_.family == Family::kMLP) {
    mlp.collect_parameters(prefix + "mlp.", out);
    return;
  }
  if (spec_.family == Family::kResNet) {
    resnet.collect_parameters(prefix + "resnet.", out);
    return;
  }
  if (!embedding.categorical_table.defined()) return;
  embedding.collect_parameters(prefix + "embedding.", out);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = prefix + "layers." + std::to_string(i) + ".";
    switch (layers[i].kind) {
      case LayerKind::kRNN:
        layers[i].rnn.collect_parameters(p + "rnn.", out);
        break;
      case LayerKind::kSSM:
        layers[i].norm.collect_parameters(p + "norm.", out);
        layers[i].ssm.collect_parameters(p + "ssm.", out);
        break;
      case LayerKind::kAttention:
        layers[i].attention.collect_parameters(p + "attention.", out);
        break;
    }
  }
  if (final_norm.gamma.defined()) final_norm.collect_parameters(prefix + "final_norm.", out);
  head.collect_parameters(prefix + "head.", out);
}

std::size_t count_params(const Model& model) { return model.parameter_count(); }

namespace {

std::size_t linear(std::size_t in, std::size_t out) { return in * out + out; }
std::size_t norm(std::size_t w) { return 2 * w; }

}  // namespace

std::size_t count_params(const ModelSpec& spec, const encoding::FeatureLayout& layout) {
  spec.validate();
  const std::size_t flat = layout.ple_width() + layout.one_hot_width();
  if (spec.family == Family::kMLP) {
    std::size_t total = 0;
    std::size_t prev = flat;
    for (std::size_t i = 0; i < spec.layers; ++i) {
      total += linear(prev, spec.width);
      prev = spec.width;
    }
    return total + linear(prev, 1);
  }
  if (spec.family == Family::kResNet) {
    const std::size_t inner = spec.bottleneck == 0 ? spec.width : spec.bottleneck;
    return linear(flat, spec.width) +
           spec.layers * (norm(spec.width) + linear(spec.width, inner) + linear(inner, spec.width)) +
           norm(spec.width) + linear(spec.width, 1);
  }
  const std::size_t d = spec.d;
  const std::size_t cat_rows = std::accumulate(layout.category_rows.begin(), layout.category_rows.end(), std::size_t{0});
  std::size_t total = cat_rows * d + layout.ple_width() * d + layout.numerical_count() * d;
  const std::size_t ssm = norm(d) + d * spec.state + d + linear(d, spec.per_channel_delta ? d : 1) +
                          2 * linear(d, spec.state) + 2 * linear(d, d);
  const std::size_t attention = 2 * norm(d) + linear(d, 3 * d) + linear(d, d) + linear(d, spec.ffn_hidden) +
                                linear(spec.ffn_hidden, d);
  std::size_t width = d;
  for (std::size_t i = 0; i < spec.layers; ++i) {
    switch (spec.family) {
      case Family::kTabulaRNN: {
        const std::size_t gates = spec.cell == nn::CellKind::kVanilla ? 1 : spec.cell == nn::CellKind::kGRU ? 3 : 4;
        const std::size_t g = gates * spec.rnn_hidden;
        total += width * g + spec.rnn_hidden * g + g;
        width = spec.rnn_hidden;
        break;
      }
      case Family::kMambular:
        total += ssm;
        break;
      case Family::kMambAttention:
        total += i % 2 == 0 ? ssm : attention;
        break;
      case Family::kFTTransformer:
        total += attention;
        break;
      default:
        break;
    }
  }
  if (spec.family != Family::kTabulaRNN) total += norm(d);
  return total + linear(width, spec.head_hidden) + linear(spec.head_hidden, 1);
}

Tensor predict(const Model& model, const nn::Batch& batch) {
  const auto& layout = model.layout();
  if (batch.ple.rank() != 2 || batch.ple.dim(0) != batch.rows || batch.ple.dim(1) != layout.ple_width() ||
      batch.codes.size() != batch.rows * layout.categorical_count()) {
    throw ContractError("batch encoding (" + std::to_string(batch.codes.size()) + " codes, PLE " +
                        to_string(batch.ple.shape()) + ") does not match the model's layout of " +
                        std::to_string(layout.categorical_count()) + " categorical features and PLE width " +
                        std::to_string(layout.ple_width()));
  }
  TapeScope off(nullptr);
  return model.forward(batch);
}

std::vector<double> predict(const Model& model, const encoding::EncodedDataset& data, std::size_t batch_size) {
  if (!(data.layout == model.layout())) throw ContractError("dataset layout does not match the model");
  if (batch_size == 0) batch_size = 1;
  std::vector<double> out;
  out.reserve(data.rows);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.rows; start += batch_size) {
    rows.resize(std::min(batch_size, data.rows - start));
    std::iota(rows.begin(), rows.end(), start);
    Tensor y = predict(model, nn::make_batch(data, rows));
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

}  // namespace tabseq::models
