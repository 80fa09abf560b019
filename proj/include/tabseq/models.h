#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabseq/blocks.h"
#include "tabseq/encoding.h"

namespace tabseq::models {

using tabseq::to_string;

enum class Family { kTabulaRNN, kMambular, kMambAttention, kFTTransformer, kMLP, kResNet };

Family parse_family(std::string_view name);
std::string_view to_string(Family family);
const std::vector<Family>& all_families();
bool is_sequence_model(Family family);

struct ModelSpec {
  Family family = Family::kMambular;
  Task task = Task::kRegression;
  std::size_t d = 64;
  std::size_t layers = 4;
  std::size_t state = 16;         // SSM inner dimension
  std::size_t heads = 8;          // attention heads
  std::size_t rnn_hidden = 64;    // d_h
  std::size_t head_hidden = 64;   // task-head hidden width
  std::size_t ffn_hidden = 64;    // attention feedforward width
  std::size_t width = 256;        // MLP / ResNet hidden width
  std::size_t bottleneck = 0;     // ResNet inner width, 0 = width
  nn::CellKind cell = nn::CellKind::kVanilla;
  nn::Activation rnn_activation = nn::Activation::kTanh;
  nn::ScanMode scan = nn::ScanMode::kRecurrent;
  bool per_channel_delta = false;

  // Throws ConfigError on invariant violations.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

ModelSpec default_spec(Family family, Task task = Task::kRegression);
nlohmann::json to_json(const ModelSpec& spec);
// Missing keys keep defaults of the named family; unknown keys are rejected.
ModelSpec spec_from_json(const nlohmann::json& j);

enum class LayerKind { kRNN, kSSM, kAttention };
std::string_view to_string(LayerKind kind);

class Model : public nn::Module {
 public:
  struct Layer {
    LayerKind kind = LayerKind::kSSM;
    nn::RNNLayer rnn;
    nn::LayerNorm norm;  // pre-norm of the residual SSM wrapper
    nn::SSMBlock ssm;
    nn::AttentionBlock attention;
  };

  Model() = default;

  // (N, 1): raw regression output or logit.
  Tensor forward(const nn::Batch& batch) const;
  void collect_parameters(const std::string& prefix, nn::ParameterList& out) const override;

  const ModelSpec& spec() const { return spec_; }
  const encoding::FeatureLayout& layout() const { return layout_; }
  std::vector<LayerKind> pattern() const;

  nn::FeatureEmbedding embedding;
  std::vector<Layer> layers;
  nn::LayerNorm final_norm;
  nn::TaskHead head;
  nn::MLP mlp;
  nn::ResNet resnet;

 private:
  friend Model build(const ModelSpec&, const encoding::FeatureLayout&, std::mt19937_64&);
  ModelSpec spec_;
  encoding::FeatureLayout layout_;
};

Model build(const ModelSpec& spec, const encoding::FeatureLayout& layout, std::mt19937_64& rng);

std::size_t count_params(const Model& model);
// Closed-form count for a spec without building it.
std::size_t count_params(const ModelSpec& spec, const encoding::FeatureLayout& layout);

struct ParamBudget {
  std::size_t target = 350'000;
  double tolerance = 0.05;
  // Spec fields the search may vary; empty selects the family default.
  std::vector<std::string> search;
  std::size_t max_value = 4096;
};

std::vector<std::string> default_search_dims(Family family);

// Deterministic ascending grid search for the spec whose parameter count is
// closest to the target (first hit wins on ties).
ModelSpec budget(const ModelSpec& spec, const encoding::FeatureLayout& layout, const ParamBudget& budget);

// Inference without recording. Throws ContractError if the batch does not
// match the model's feature layout.
Tensor predict(const Model& model, const nn::Batch& batch);
std::vector<double> predict(const Model& model, const encoding::EncodedDataset& data, std::size_t batch_size = 256);

// Single-file archive: magic "TSQA", u32 version, u64 manifest length, JSON
// manifest (spec, layout, optional encoder, layer pattern, tensor list), then
// the tensor container.
inline constexpr std::uint32_t kArchiveVersion = 1;

struct LoadedModel {
  Model model;
  std::optional<encoding::DatasetEncoder> encoder;
  nlohmann::json manifest;
};

void save_model(const std::filesystem::path& path, const Model& model,
                const encoding::DatasetEncoder* encoder = nullptr, const nlohmann::json& metadata = {});
LoadedModel load_model(const std::filesystem::path& path);
nlohmann::json manifest(const Model& model);

}  // namespace tabseq::models
