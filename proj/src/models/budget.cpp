#include <cmath>
#include <cstdlib>
#include <limits>

#include "tabseq/error.h"
#include "tabseq/models.h"

namespace tabseq::models {

namespace {

std::size_t* field(ModelSpec& spec, const std::string& name) {
  if (name == "rnn_hidden") return &spec.rnn_hidden;
  if (name == "state") return &spec.state;
  if (name == "head_hidden") return &spec.head_hidden;
  if (name == "ffn_hidden") return &spec.ffn_hidden;
  if (name == "width") return &spec.width;
  if (name == "bottleneck") return &spec.bottleneck;
  if (name == "d" || name == "layers") {
    throw ConfigError("budget search may not vary '" + name + "'; embedding size and depth are fixed");
  }
  throw ConfigError("unknown budget search dimension '" + name + "'");
}

}  // namespace

std::vector<std::string> default_search_dims(Family family) {
  switch (family) {
    case Family::kTabulaRNN:
      return {"rnn_hidden"};
    case Family::kMambular:
    case Family::kMambAttention:
    case Family::kFTTransformer:
      return {"head_hidden"};
    case Family::kMLP:
    case Family::kResNet:
      return {"width"};
  }
  return {};
}

ModelSpec budget(const ModelSpec& spec, const encoding::FeatureLayout& layout, const ParamBudget& b) {
  const auto dims = b.search.empty() ? default_search_dims(spec.family) : b.search;
  if (dims.empty()) throw ConfigError("budget needs at least one searchable dimension");
  if (b.max_value == 0) throw ConfigError("budget grid is empty");
  ModelSpec probe = spec;
  std::vector<std::size_t*> fields;
  for (const auto& name : dims) fields.push_back(field(probe, name));

  // Keep the cartesian grid near a million points.
  const double per_dim = std::floor(std::pow(1e6, 1.0 / static_cast<double>(dims.size())));
  const std::size_t step =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(static_cast<double>(b.max_value) / per_dim)));
  const std::size_t first = step;

  ModelSpec best = spec;
  long long best_count = -1;
  long long best_gap = std::numeric_limits<long long>::max();
  const long long target = static_cast<long long>(b.target);
  for (auto* f : fields) *f = first;
  while (true) {
    long long count = -1;
    try {
      count = static_cast<long long>(count_params(probe, layout));
    } catch (const ConfigError&) {
    }
    if (count >= 0) {
      const long long gap = std::llabs(count - target);
      if (gap < best_gap) {
        best_gap = gap;
        best_count = count;
        best = probe;
      }
    }
    std::size_t k = 0;
    for (; k < fields.size(); ++k) {
      *fields[k] += step;
      if (*fields[k] <= b.max_value) break;
      *fields[k] = first;
    }
    if (k == fields.size()) break;
  }
  if (best_count < 0) throw BudgetError("no valid configuration in the budget grid", 0);
  if (static_cast<double>(best_gap) > b.tolerance * static_cast<double>(b.target)) {
    throw BudgetError("parameter budget " + std::to_string(b.target) + " (tolerance " +
                          std::to_string(b.tolerance) + ") unreachable for " + std::string(to_string(spec.family)) +
                          "; nearest achievable count is " + std::to_string(best_count),
                      best_count);
  }
  return best;
}

}  // namespace tabseq::models
