#include <cstring>
#include <fstream>
#include <sstream>

#include "tabseq/error.h"
#include "tabseq/models.h"

namespace tabseq::models {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'Q', 'A'};

nlohmann::json layout_json(const encoding::FeatureLayout& layout) {
  return {{"category_rows", layout.category_rows}, {"bin_counts", layout.bin_counts}};
}

encoding::FeatureLayout layout_from(const nlohmann::json& j) {
  encoding::FeatureLayout layout;
  layout.category_rows = j.at("category_rows").get<std::vector<std::size_t>>();
  layout.bin_counts = j.at("bin_counts").get<std::vector<std::size_t>>();
  return layout;
}

}  // namespace

nlohmann::json manifest(const Model& model) {
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& p : model.parameters()) {
    tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"count", p.tensor.numel()}});
    total += p.tensor.numel();
  }
  nlohmann::json pattern = nlohmann::json::array();
  for (auto kind : model.pattern()) pattern.push_back(to_string(kind));
  return {{"kind", "tabseq.model"},     {"version", kArchiveVersion},
          {"spec", to_json(model.spec())}, {"layout", layout_json(model.layout())},
          {"layers", pattern},          {"tensors", tensors},
          {"parameter_count", total}};
}

void save_model(const std::filesystem::path& path, const Model& model, const encoding::DatasetEncoder* encoder,
                const nlohmann::json& metadata) {
  nlohmann::json doc = manifest(model);
  if (encoder) doc["encoder"] = encoder->to_json();
  if (!metadata.is_null()) doc["metadata"] = metadata;
  const std::string text = doc.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model archive " + path.string());
  out.write(kMagic, 4);
  const std::uint32_t version = kArchiveVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t length = text.size();
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  nn::write_tensors(out, model.parameters());
  if (!out) throw IoError("failed writing model archive " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model archive " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError(path.string() + " is not a model archive");
  }
  if (!in.read(reinterpret_cast<char*>(&version), sizeof version) || version != kArchiveVersion) {
    throw IoError("unsupported model archive version in " + path.string());
  }
  if (!in.read(reinterpret_cast<char*>(&length), sizeof length)) throw IoError("model archive truncated");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw IoError("model archive truncated");

  LoadedModel loaded;
  try {
    loaded.manifest = nlohmann::json::parse(text);
    const ModelSpec spec = spec_from_json(loaded.manifest.at("spec"));
    const auto layout = layout_from(loaded.manifest.at("layout"));
    std::mt19937_64 rng(0);
    loaded.model = build(spec, layout, rng);
    if (loaded.manifest.contains("encoder")) {
      loaded.encoder = encoding::DatasetEncoder::from_json(loaded.manifest.at("encoder"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt model manifest in " + path.string() + ": " + e.what());
  }
  const auto tensors = nn::read_tensors(in);
  const auto params = loaded.model.parameters();
  if (tensors.size() != params.size()) {
    throw IoError("model archive holds " + std::to_string(tensors.size()) + " tensors, spec expects " +
                  std::to_string(params.size()));
  }
  nn::load_parameters(params, tensors);
  return loaded;
}

}  // namespace tabseq::models
