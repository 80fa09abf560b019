#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "cli_internal.h"
#include "tabseq/bench.h"
#include "tabseq/cli.h"
#include "tabseq/data.h"
#include "tabseq/error.h"
#include "tabseq/models.h"
#include "tabseq/rng.h"
#include "tabseq/training.h"

namespace tabseq::cli {

using nlohmann::json;

namespace {

std::string lower_alnum(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

json object_or_empty(const json& parent, const char* key) {
  if (!parent.contains(key) || parent.at(key).is_null()) return json::object();
  return parent.at(key);
}

template <class T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + " has the wrong type (" + j.dump() + ")");
  }
}

std::uint64_t require_seed(const json& partial) {
  if (!partial.contains("seed") || partial.at("seed").is_null()) {
    throw ConfigError("a seed is required (--seed or \"seed\" in the config)");
  }
  const json& s = partial.at("seed");
  if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
    throw ConfigError("seed must be a non-negative integer, got " + s.dump());
  }
  return s.get<std::uint64_t>();
}

std::vector<std::size_t> size_list(const json& j, const std::string& where) {
  auto v = get_as<std::vector<std::size_t>>(j, where);
  if (v.empty()) throw ConfigError(where + " must not be empty");
  return v;
}

std::vector<std::string> string_list(const json& j, const std::string& where) {
  if (j.is_string()) return {j.get<std::string>()};
  return get_as<std::vector<std::string>>(j, where);
}

json resolve_data(const json& partial, std::uint64_t seed, bool allow_dataset) {
  if (!partial.contains("data")) throw ConfigError("no data source: give --synth or --dataset");
  const json& data = partial.at("data");
  check_keys(data, {"synth", "dataset"}, "data");
  const bool synth = data.contains("synth") && !data.at("synth").is_null();
  const bool dataset = data.contains("dataset") && !data.at("dataset").is_null();
  if (synth == dataset) throw ConfigError("exactly one data source is required (synth or dataset)");
  if (dataset) {
    if (!allow_dataset) throw ConfigError("this command only takes synthetic data");
    return {{"dataset", get_as<std::string>(data.at("dataset"), "data.dataset")}};
  }
  json s = data.at("synth");
  if (!s.is_object()) throw ConfigError("data.synth must be a JSON object");
  s["seed"] = seed;
  auto config = data::synth_config_from_json(s);
  config.validate();
  return {{"synth", data::to_json(config)}};
}

Task data_task(const json& data) {
  if (data.contains("synth")) return parse_task(data.at("synth").at("task").get<std::string>());
  const auto registry = data::load_registry(data::default_registry_path());
  return registry.find(data.at("dataset").get<std::string>()).task;
}

json resolve_train(const json& partial) {
  check_keys(partial, {"schema_version", "command", "seed", "output_dir", "data", "models", "budget", "train"},
             "train config");
  const std::uint64_t seed = require_seed(partial);
  json out{{"schema_version", kSchemaVersion}, {"command", "train"}, {"seed", seed}};
  out["output_dir"] = partial.value("output_dir", json());
  out["data"] = resolve_data(partial, seed, true);
  const Task task = data_task(out["data"]);

  if (!partial.contains("models") || !partial.at("models").is_array() || partial.at("models").empty()) {
    throw ConfigError("no models: give --families or a \"models\" list");
  }
  json models = json::array();
  for (const auto& m : partial.at("models")) {
    json spec = m.is_string() ? json{{"family", m}} : m;
    if (!spec.is_object()) throw ConfigError("each model must be a family name or a spec object");
    if (spec.contains("family") && spec.at("family").is_string()) {
      spec["family"] = std::string(models::to_string(parse_family_name(spec.at("family").get<std::string>())));
    }
    spec["task"] = std::string(to_string(task));
    auto parsed = models::spec_from_json(spec);
    parsed.validate();
    models.push_back(models::to_json(parsed));
  }
  out["models"] = models;

  json budget = object_or_empty(partial, "budget");
  check_keys(budget, {"enabled", "target", "tolerance"}, "budget");
  models::ParamBudget defaults;
  json b{{"enabled", get_as<bool>(budget.value("enabled", json(false)), "budget.enabled")},
         {"target", get_as<std::size_t>(budget.value("target", json(defaults.target)), "budget.target")},
         {"tolerance", get_as<double>(budget.value("tolerance", json(defaults.tolerance)), "budget.tolerance")}};
  if (b["target"].get<std::size_t>() == 0) throw ConfigError("budget.target must be positive");
  if (!(b["tolerance"].get<double>() > 0.0)) throw ConfigError("budget.tolerance must be positive");
  out["budget"] = b;

  json train = object_or_empty(partial, "train");
  train["seed"] = seed;
  out["train"] = train::to_json(train::train_config_from_json(train));
  return out;
}

json resolve_bench(const json& partial) {
  check_keys(partial, {"schema_version", "command", "seed", "output_dir", "bench"}, "bench config");
  const std::uint64_t seed = require_seed(partial);
  json in = object_or_empty(partial, "bench");
  check_keys(in,
             {"sweeps", "families", "scan_modes", "passes", "J_values", "d", "d_values", "embedding_J", "repeats",
              "warmups", "batch", "rank_scatter", "tie"},
             "bench");
  json b;
  std::vector<std::string> sweeps;
  for (const auto& s : string_list(in.value("sweeps", json{"features", "embedding"}), "bench.sweeps")) {
    sweeps.push_back(bench::parse_axis(s) == bench::Axis::kFeatures ? "features" : "embedding");
  }
  if (sweeps.empty()) throw ConfigError("bench.sweeps must not be empty");
  b["sweeps"] = sweeps;

  std::vector<std::string> families;
  const json fam = in.value("families", json("all"));
  if (fam == json("all")) {
    for (auto f : models::all_families()) families.emplace_back(models::to_string(f));
  } else {
    for (const auto& f : string_list(fam, "bench.families")) {
      families.emplace_back(models::to_string(parse_family_name(f)));
    }
  }
  if (families.empty()) throw ConfigError("bench.families must not be empty");
  b["families"] = families;

  std::vector<std::string> scans;
  for (const auto& s : string_list(in.value("scan_modes", json{"recurrent", "fused"}), "bench.scan_modes")) {
    scans.emplace_back(nn::to_string(nn::parse_scan_mode(s)));
  }
  if (scans.empty()) throw ConfigError("bench.scan_modes must not be empty");
  b["scan_modes"] = scans;

  std::vector<std::string> passes;
  for (const auto& p : string_list(in.value("passes", json{"forward", "forward+backward"}), "bench.passes")) {
    passes.emplace_back(bench::to_string(bench::parse_pass(p)));
  }
  if (passes.empty()) throw ConfigError("bench.passes must not be empty");
  b["passes"] = passes;

  auto Js = size_list(in.value("J_values", json{8, 16, 32, 64, 128, 256, 512}), "bench.J_values");
  if (Js.size() < 4 || !std::is_sorted(Js.begin(), Js.end()) ||
      std::adjacent_find(Js.begin(), Js.end()) != Js.end() || Js.front() < 2) {
    throw ConfigError("bench.J_values needs at least 4 strictly ascending values >= 2");
  }
  b["J_values"] = Js;
  b["d"] = get_as<std::size_t>(in.value("d", json(64)), "bench.d");
  auto ds = size_list(in.value("d_values", json{16, 32, 64, 128}), "bench.d_values");
  if (ds.size() < 4 || !std::is_sorted(ds.begin(), ds.end()) ||
      std::adjacent_find(ds.begin(), ds.end()) != ds.end()) {
    throw ConfigError("bench.d_values needs at least 4 strictly ascending values");
  }
  b["d_values"] = ds;
  b["embedding_J"] = get_as<std::size_t>(in.value("embedding_J", json(12)), "bench.embedding_J");
  if (b["embedding_J"].get<std::size_t>() < 2) throw ConfigError("bench.embedding_J must be at least 2");
  b["repeats"] = get_as<std::size_t>(in.value("repeats", json(7)), "bench.repeats");
  b["warmups"] = get_as<std::size_t>(in.value("warmups", json(3)), "bench.warmups");
  const json batch = in.value("batch", json());
  if (!batch.is_null() && get_as<std::size_t>(batch, "bench.batch") == 0) {
    throw ConfigError("bench.batch must be positive");
  }
  b["batch"] = batch;

  const json scatter = in.value("rank_scatter", json());
  if (scatter.is_null() || scatter == json("reference")) {
    b["rank_scatter"] = scatter;
  } else {
    auto paths = string_list(scatter, "bench.rank_scatter");
    if (paths.empty()) throw ConfigError("bench.rank_scatter needs at least one results file");
    b["rank_scatter"] = paths;
  }
  const auto tie = get_as<std::string>(in.value("tie", json("mean")), "bench.tie");
  b["tie"] = std::string(train::to_string(train::parse_tie_policy(tie)));

  json out{{"schema_version", kSchemaVersion}, {"command", "bench"}, {"seed", seed}};
  out["output_dir"] = partial.value("output_dir", json());
  out["bench"] = b;
  return out;
}

json resolve_rank(const json& partial) {
  check_keys(partial, {"schema_version", "command", "seed", "output_dir", "rank"}, "rank config");
  json in = object_or_empty(partial, "rank");
  check_keys(in, {"results", "reference", "tie"}, "rank");
  json r;
  r["results"] = in.contains("results") ? string_list(in.at("results"), "rank.results") : std::vector<std::string>{};
  r["reference"] = get_as<bool>(in.value("reference", json(false)), "rank.reference");
  if (r["results"].empty() == !r["reference"].get<bool>()) {
    throw ConfigError("rank needs either results files or --reference, not both");
  }
  const auto tie = get_as<std::string>(in.value("tie", json("mean")), "rank.tie");
  if (tie != "both") train::parse_tie_policy(tie);
  r["tie"] = tie;
  json out{{"schema_version", kSchemaVersion}, {"command", "rank"}};
  out["output_dir"] = partial.value("output_dir", json());
  out["rank"] = r;
  return out;
}

json resolve_synth(const json& partial) {
  check_keys(partial, {"schema_version", "command", "seed", "output_dir", "data"}, "synth config");
  const std::uint64_t seed = require_seed(partial);
  json out{{"schema_version", kSchemaVersion}, {"command", "synth"}, {"seed", seed}};
  out["output_dir"] = partial.value("output_dir", json());
  out["data"] = resolve_data(partial, seed, false);
  return out;
}

json resolve_fetch(const json& partial) {
  check_keys(partial, {"schema_version", "command", "seed", "output_dir", "fetch"}, "fetch config");
  json in = object_or_empty(partial, "fetch");
  check_keys(in, {"datasets", "force"}, "fetch");
  const auto registry = data::load_registry(data::default_registry_path());
  std::vector<std::string> names;
  const json requested = in.value("datasets", json::array());
  if (requested == json("all") || requested == json{"all"}) {
    for (const auto& d : registry.datasets) names.push_back(d.name);
  } else {
    for (const auto& n : string_list(requested, "fetch.datasets")) names.push_back(registry.find(n).name);
  }
  if (names.empty()) throw ConfigError("fetch needs at least one dataset name (or 'all')");
  json out{{"schema_version", kSchemaVersion}, {"command", "fetch"}};
  out["output_dir"] = partial.value("output_dir", json());
  out["fetch"] = {{"datasets", names}, {"force", get_as<bool>(in.value("force", json(false)), "fetch.force")}};
  return out;
}

json resolve_report(const json& partial) {
  check_keys(partial, {"schema_version", "command", "seed", "output_dir", "report"}, "report config");
  json in = object_or_empty(partial, "report");
  check_keys(in, {"input"}, "report");
  if (!in.contains("input")) throw ConfigError("report needs the bench output directory to read");
  json out{{"schema_version", kSchemaVersion}, {"command", "report"}};
  out["output_dir"] = partial.value("output_dir", json());
  out["report"] = {{"input", get_as<std::string>(in.at("input"), "report.input")}};
  return out;
}

}  // namespace

models::Family parse_family_name(std::string_view name) {
  const std::string key = lower_alnum(name);
  for (auto f : models::all_families()) {
    if (lower_alnum(models::to_string(f)) == key) return f;
  }
  std::string known;
  for (auto f : models::all_families()) known += (known.empty() ? "" : ", ") + std::string(models::to_string(f));
  throw ConfigError("unknown model family '" + std::string(name) + "' (known: " + known + ")");
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  return kExitOther;
}

std::string_view error_kind(const std::exception& e) {
  if (dynamic_cast<const NetworkError*>(&e)) return "network";
  if (dynamic_cast<const IntegrityError*>(&e)) return "integrity";
  if (dynamic_cast<const BudgetError*>(&e)) return "budget";
  switch (exit_code(e)) {
    case kExitConfig:
      return "config";
    case kExitData:
      return "data";
    case kExitNumeric:
      return "numeric";
    case kExitIo:
      return "io";
    default:
      return "internal";
  }
}

void apply_assignment(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("expected key.path=value, got '" + std::string(assignment) + "'");
  }
  const std::string_view path = assignment.substr(0, eq);
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key(path.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
    if (key.empty()) throw ConfigError("empty component in key path '" + std::string(path) + "'");
    std::size_t index = 0;
    const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), index);
    const bool numeric = ec == std::errc() && ptr == key.data() + key.size();
    json* next = nullptr;
    if (node->is_array()) {
      if (!numeric || index >= node->size()) {
        throw ConfigError("index '" + key + "' out of range in key path '" + std::string(path) + "'");
      }
      next = &(*node)[index];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ConfigError("cannot descend into '" + key + "' of '" + std::string(path) + "'");
      next = &(*node)[key];
    }
    if (dot == std::string_view::npos) {
      *next = value;
      return;
    }
    node = next;
    start = dot + 1;
  }
}

json resolve(const json& partial) {
  if (!partial.is_object()) throw ConfigError("config must be a JSON object");
  if (partial.contains("schema_version") && partial.at("schema_version") != kSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + partial.at("schema_version").dump());
  }
  if (!partial.contains("command") || !partial.at("command").is_string()) {
    throw ConfigError("config has no command");
  }
  const auto command = partial.at("command").get<std::string>();
  if (command == "train") return resolve_train(partial);
  if (command == "bench") return resolve_bench(partial);
  if (command == "rank") return resolve_rank(partial);
  if (command == "synth") return resolve_synth(partial);
  if (command == "fetch") return resolve_fetch(partial);
  if (command == "report") return resolve_report(partial);
  throw ConfigError("unknown command '" + command + "'");
}

std::string run_id(const json& resolved) {
  json copy = resolved;
  copy.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(stable_hash(copy.dump())));
  return buf;
}

std::filesystem::path default_output_root() {
  if (const char* env = std::getenv("TABSEQ_OUTPUT_DIR"); env && *env) return env;
  return "runs";
}

}  // namespace tabseq::cli
