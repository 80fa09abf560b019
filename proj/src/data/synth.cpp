#include <cmath>
#include <numbers>

#include "tabseq/data.h"
#include "tabseq/error.h"
#include "tabseq/rng.h"

namespace tabseq::data {

namespace {

// Portable draws; std distributions are implementation-defined.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double gaussian(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

TargetRule parse_target_rule(std::string_view name) {
  if (name == "linear") return TargetRule::kLinear;
  if (name == "interaction" || name == "nonlinear-interaction") return TargetRule::kInteraction;
  if (name == "noise" || name == "noise-only") return TargetRule::kNoise;
  throw ConfigError("unknown target rule '" + std::string(name) + "' (expected linear, interaction or noise)");
}

std::string_view to_string(TargetRule rule) {
  switch (rule) {
    case TargetRule::kLinear: return "linear";
    case TargetRule::kInteraction: return "interaction";
    case TargetRule::kNoise: return "noise";
  }
  return "?";
}

void SynthConfig::validate() const {
  if (rows == 0) throw ConfigError("synthetic data needs at least one row");
  if (numerical + categorical == 0) throw ConfigError("synthetic data needs at least one feature");
  if (categorical > 0 && categories < 2) throw ConfigError("categorical features need at least 2 levels");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be a finite non-negative scale");
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"numerical", c.numerical}, {"categorical", c.categorical}, {"categories", c.categories},
          {"rows", c.rows},           {"seed", c.seed},               {"rule", std::string(to_string(c.rule))},
          {"task", std::string(to_string(c.task))}, {"noise", c.noise}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    if (k == "numerical") c.numerical = v.get<std::size_t>();
    else if (k == "categorical") c.categorical = v.get<std::size_t>();
    else if (k == "categories") c.categories = v.get<std::size_t>();
    else if (k == "rows") c.rows = v.get<std::size_t>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "rule") c.rule = parse_target_rule(v.get<std::string>());
    else if (k == "task") c.task = parse_task(v.get<std::string>());
    else if (k == "noise") c.noise = v.get<double>();
    else throw ConfigError("unknown synthetic data key '" + k + "'");
  }
  c.validate();
  return c;
}

RawTable synthesize(const SynthConfig& cfg) {
  cfg.validate();
  auto wrng = substream(cfg.seed, "synth/weights");
  auto rng = substream(cfg.seed, "synth/rows");

  std::vector<double> weight(cfg.numerical);
  for (auto& w : weight) w = (wrng() & 1 ? 1.0 : -1.0) * uniform(wrng, 0.5, 1.5);
  std::vector<std::vector<double>> offset(cfg.categorical, std::vector<double>(cfg.categories));
  std::vector<std::vector<double>> slope(cfg.categorical, std::vector<double>(cfg.categories));
  for (std::size_t c = 0; c < cfg.categorical; ++c) {
    for (std::size_t k = 0; k < cfg.categories; ++k) {
      offset[c][k] = uniform(wrng, -1.0, 1.0);
      slope[c][k] = uniform(wrng, -1.0, 1.0);
    }
  }

  RawTable t;
  t.task = cfg.task;
  t.target_name = "y";
  for (std::size_t j = 0; j < cfg.categorical; ++j) t.categorical_names.push_back("cat_" + std::to_string(j));
  for (std::size_t j = 0; j < cfg.numerical; ++j) t.numerical_names.push_back("num_" + std::to_string(j));
  t.categorical.assign(cfg.categorical, {});
  t.numerical.assign(cfg.numerical, {});

  std::vector<double> x(cfg.numerical);
  std::vector<std::size_t> level(cfg.categorical);
  for (std::size_t i = 0; i < cfg.rows; ++i) {
    for (std::size_t j = 0; j < cfg.numerical; ++j) {
      x[j] = uniform(rng, -1.0, 1.0);
      t.numerical[j].push_back(x[j]);
    }
    for (std::size_t c = 0; c < cfg.categorical; ++c) {
      level[c] = static_cast<std::size_t>(rng() % cfg.categories);
      t.categorical[c].emplace_back("l" + std::to_string(level[c]));
    }
    double y = 0.0;
    switch (cfg.rule) {
      case TargetRule::kLinear:
        for (std::size_t j = 0; j < cfg.numerical; ++j) y += weight[j] * x[j];
        for (std::size_t c = 0; c < cfg.categorical; ++c) y += offset[c][level[c]];
        y += cfg.noise * gaussian(rng);
        break;
      case TargetRule::kInteraction:
        for (std::size_t j = 0; j < cfg.numerical; ++j) y += weight[j] * std::sin(2.0 * x[j]);
        for (std::size_t j = 0; j + 1 < cfg.numerical; j += 2) y += 2.0 * x[j] * x[j + 1];
        for (std::size_t c = 0; c < cfg.categorical; ++c) {
          y += offset[c][level[c]];
          if (cfg.numerical > 0) y += slope[c][level[c]] * x[c % cfg.numerical];
        }
        y += cfg.noise * gaussian(rng);
        break;
      case TargetRule::kNoise:
        y = gaussian(rng);
        break;
    }
    t.target.push_back(cfg.task == Task::kBinary ? (y > 0.0 ? 1.0 : 0.0) : y);
  }
  return t;
}

}  // namespace tabseq::data
