#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "tabseq/data.h"
#include "tabseq/error.h"

#ifndef TABSEQ_SOURCE_DIR
#define TABSEQ_SOURCE_DIR "."
#endif

namespace tabseq::data {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? fallback : it->get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }) == keys.end()) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

}  // namespace

json to_json(const DatasetMeta& m) {
  json sources = json::array();
  for (const auto& s : m.sources) {
    json js{{"file", s.file}, {"skip_lines", s.skip_lines}, {"constants", s.constants}};
    js["url"] = s.url ? json(*s.url) : json(nullptr);
    js["sha256"] = s.sha256 ? json(*s.sha256) : json(nullptr);
    sources.push_back(js);
  }
  json expected{{"categorical", m.expected.categorical}, {"numerical", m.expected.numerical},
                {"train", m.expected.train},             {"test", m.expected.test},
                {"val", m.expected.val}};
  expected["ratio"] = m.expected.ratio ? json(*m.expected.ratio) : json(nullptr);
  return {{"name", m.name},
          {"abbreviation", m.abbreviation},
          {"task", std::string(to_string(m.task))},
          {"categorical", m.categorical},
          {"numerical", m.numerical},
          {"target", m.target},
          {"positive_labels", m.positive_labels},
          {"expected", expected},
          {"format",
           {{"delimiter", std::string(1, m.format.delimiter)},
            {"header", m.format.header},
            {"trim", m.format.trim},
            {"columns", m.format.columns},
            {"na_tokens", m.format.na_tokens}}},
          {"sources", sources},
          {"notes", m.notes}};
}

DatasetMeta meta_from_json(const json& j) {
  DatasetMeta m;
  m.name = j.at("name").get<std::string>();
  const std::string where = "dataset '" + m.name + "'";
  reject_unknown(j,
                 {"name", "abbreviation", "task", "categorical", "numerical", "target", "positive_labels", "expected",
                  "format", "sources", "notes"},
                 where);
  m.abbreviation = j.at("abbreviation").get<std::string>();
  m.task = parse_task(j.at("task").get<std::string>());
  m.categorical = j.at("categorical").get<std::vector<std::string>>();
  m.numerical = j.at("numerical").get<std::vector<std::string>>();
  m.target = j.at("target").get<std::string>();
  m.positive_labels = get_or(j, "positive_labels", std::vector<std::string>{});
  m.notes = get_or(j, "notes", std::string{});

  const auto& e = j.at("expected");
  m.expected.categorical = e.at("categorical").get<std::size_t>();
  m.expected.numerical = e.at("numerical").get<std::size_t>();
  m.expected.train = e.at("train").get<std::size_t>();
  m.expected.test = e.at("test").get<std::size_t>();
  m.expected.val = e.at("val").get<std::size_t>();
  if (e.contains("ratio") && !e["ratio"].is_null()) m.expected.ratio = e["ratio"].get<double>();

  if (j.contains("format")) {
    const auto& f = j["format"];
    reject_unknown(f, {"delimiter", "header", "trim", "columns", "na_tokens"}, where + " format");
    const auto delim = get_or(f, "delimiter", std::string(","));
    if (delim.size() != 1) throw ConfigError(where + ": delimiter must be one character");
    m.format.delimiter = delim[0];
    m.format.header = get_or(f, "header", true);
    m.format.trim = get_or(f, "trim", false);
    m.format.columns = get_or(f, "columns", std::vector<std::string>{});
    if (f.contains("na_tokens")) m.format.na_tokens = f["na_tokens"].get<std::vector<std::string>>();
  }
  for (const auto& s : j.at("sources")) {
    reject_unknown(s, {"file", "url", "sha256", "skip_lines", "constants"}, where + " source");
    Source src;
    src.file = s.at("file").get<std::string>();
    if (s.contains("url") && !s["url"].is_null()) src.url = s["url"].get<std::string>();
    if (s.contains("sha256") && !s["sha256"].is_null()) src.sha256 = lower(s["sha256"].get<std::string>());
    src.skip_lines = get_or(s, "skip_lines", std::size_t{0});
    src.constants = get_or(s, "constants", std::map<std::string, std::string>{});
    m.sources.push_back(std::move(src));
  }

  std::vector<std::string> all = m.categorical;
  all.insert(all.end(), m.numerical.begin(), m.numerical.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw ConfigError(where + ": categorical and numerical columns overlap");
  }
  if (std::binary_search(all.begin(), all.end(), m.target)) {
    throw ConfigError(where + ": target '" + m.target + "' is listed as a feature");
  }
  if (m.task == Task::kBinary && !m.expected.ratio) throw ConfigError(where + ": classification needs a ratio");
  return m;
}

const DatasetMeta& Registry::find(std::string_view key) const {
  const auto k = lower(key);
  for (const auto& d : datasets) {
    if (lower(d.name) == k || lower(d.abbreviation) == k) return d;
  }
  std::string known;
  for (const auto& d : datasets) known += (known.empty() ? "" : ", ") + d.abbreviation;
  throw ConfigError("unknown dataset '" + std::string(key) + "' (known: " + known + ")");
}

Registry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset registry " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("registry " + path.string() + ": " + e.what());
  }
  Registry r;
  try {
    for (const auto& d : doc.at("datasets")) r.datasets.push_back(meta_from_json(d));
  } catch (const json::exception& e) {
    throw ConfigError("registry " + path.string() + ": " + e.what());
  }
  return r;
}

std::filesystem::path default_registry_path() {
  if (const char* env = std::getenv("TABSEQ_REGISTRY"); env && *env) return env;
  return std::filesystem::path(TABSEQ_SOURCE_DIR) / "data" / "registry.json";
}

std::filesystem::path default_cache_dir() {
  if (const char* env = std::getenv("TABSEQ_CACHE_DIR"); env && *env) return env;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return std::filesystem::path(xdg) / "tabseq";
  if (const char* home = std::getenv("HOME"); home && *home) {
    return std::filesystem::path(home) / ".cache" / "tabseq";
  }
  return std::filesystem::current_path() / ".tabseq-cache";
}

std::optional<double> class_ratio(const RawTable& table) {
  if (table.task != Task::kBinary) return std::nullopt;
  std::size_t pos = 0, n = 0;
  for (double y : table.target) {
    if (!std::isfinite(y)) continue;
    ++n;
    if (y == 1.0) ++pos;
  }
  if (n == 0) return std::nullopt;
  const double p = 100.0 * static_cast<double>(pos) / static_cast<double>(n);
  return std::max(p, 100.0 - p);
}

std::vector<Check> ValidationReport::mismatches() const {
  std::vector<Check> out;
  for (const auto& c : checks) {
    if (!c.ok) out.push_back(c);
  }
  return out;
}

ValidationReport validate_against_registry(const RawTable& table, const DatasetMeta& meta) {
  ValidationReport r;
  r.dataset = meta.name;
  auto add = [&](std::string field, double expected, double observed, double tol) {
    r.checks.push_back({std::move(field), expected, observed, tol, std::abs(observed - expected) <= tol});
  };
  add("categorical", static_cast<double>(meta.expected.categorical), static_cast<double>(table.categorical.size()), 0);
  add("numerical", static_cast<double>(meta.expected.numerical), static_cast<double>(table.numerical.size()), 0);
  const double rows = static_cast<double>(meta.expected.rows());
  add("rows", rows, static_cast<double>(table.rows()), 0.01 * rows);
  if (meta.expected.ratio) {
    const auto ratio = class_ratio(table);
    add("ratio", *meta.expected.ratio, ratio ? *ratio : std::nan(""), 1.0);
    if (!ratio) r.checks.back().ok = false;
  } else if (table.task == Task::kBinary) {
    r.checks.push_back({"task", 0.0, 1.0, 0.0, false});
  }
  return r;
}

}  // namespace tabseq::data
