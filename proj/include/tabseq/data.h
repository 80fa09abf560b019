#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabseq/encoding.h"

namespace tabseq::data {

using tabseq::to_string;

// RFC 4180 style: quoted fields may hold delimiters, doubled quotes and
// newlines. Blank lines are skipped.
struct CsvDocument {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct CsvFormat {
  char delimiter = ',';
  bool header = true;
  bool trim = false;                     // strip spaces around unquoted cells
  std::vector<std::string> columns;      // names when the file has no header
  std::vector<std::string> na_tokens{"", "NA", "?"};
};

CsvDocument parse_csv(std::string_view text, const CsvFormat& format, std::size_t skip_lines = 0);

struct Source {
  std::string file;                          // name inside the cache directory
  std::optional<std::string> url;            // none: place the file manually
  std::optional<std::string> sha256;         // pinned digest
  std::size_t skip_lines = 0;
  std::map<std::string, std::string> constants;  // extra columns added per row
};

struct ExpectedCounts {
  std::size_t categorical = 0;
  std::size_t numerical = 0;
  std::size_t train = 0;
  std::size_t test = 0;
  std::size_t val = 0;
  std::optional<double> ratio;  // percent of the dominant class

  std::size_t rows() const { return train + test + val; }
};

struct DatasetMeta {
  std::string name;
  std::string abbreviation;
  Task task = Task::kRegression;
  std::vector<std::string> categorical;
  std::vector<std::string> numerical;
  std::string target;
  std::vector<std::string> positive_labels;  // binary targets
  ExpectedCounts expected;
  CsvFormat format;
  std::vector<Source> sources;
  std::string notes;
};

nlohmann::json to_json(const DatasetMeta& meta);
DatasetMeta meta_from_json(const nlohmann::json& j);

struct Registry {
  std::vector<DatasetMeta> datasets;

  // By name or abbreviation, case-insensitive.
  const DatasetMeta& find(std::string_view key) const;
};

Registry load_registry(const std::filesystem::path& path);
// $TABSEQ_REGISTRY, else the registry shipped with the sources.
std::filesystem::path default_registry_path();
// $TABSEQ_CACHE_DIR, else $XDG_CACHE_HOME/tabseq, else ~/.cache/tabseq.
std::filesystem::path default_cache_dir();

// Typed feature columns. Missing numerical cells are NaN, missing
// categorical cells are empty optionals.
struct RawTable {
  Task task = Task::kRegression;
  std::vector<std::string> categorical_names;
  std::vector<std::string> numerical_names;
  std::string target_name;
  std::vector<std::vector<std::optional<std::string>>> categorical;
  std::vector<std::vector<double>> numerical;
  std::vector<double> target;

  std::size_t rows() const { return target.size(); }
};

RawTable table_from_csv(const CsvDocument& doc, const DatasetMeta& meta);
RawTable load_csv(const std::filesystem::path& path, const DatasetMeta& meta, std::size_t source = 0);
// Loads and concatenates every source of a dataset from the cache.
RawTable load_dataset(const DatasetMeta& meta, const std::filesystem::path& cache_dir);

struct DropReport {
  RawTable table;
  std::size_t dropped = 0;
};

DropReport drop_missing(const RawTable& table);
// Requires a table without missing cells.
encoding::TabularColumns to_columns(const RawTable& table);

enum class TargetRule { kLinear, kInteraction, kNoise };
TargetRule parse_target_rule(std::string_view name);
std::string_view to_string(TargetRule rule);

struct SynthConfig {
  std::size_t numerical = 10;
  std::size_t categorical = 10;
  std::size_t categories = 10;
  std::size_t rows = 32;
  std::uint64_t seed = 0;
  TargetRule rule = TargetRule::kLinear;
  Task task = Task::kRegression;  // binary thresholds the regression target at 0
  double noise = 0.1;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);

// Numericals uniform on (-1, 1), categoricals uniform over levels "l0".."lK-1"
// each carrying a fixed offset into the target.
RawTable synthesize(const SynthConfig& config);

struct Check {
  std::string field;
  double expected = 0.0;
  double observed = 0.0;
  double tolerance = 0.0;
  bool ok = true;
};

struct ValidationReport {
  std::string dataset;
  std::vector<Check> checks;

  std::vector<Check> mismatches() const;
  bool ok() const { return mismatches().empty(); }
};

// Percent of the dominant class, or nullopt for regression tables.
std::optional<double> class_ratio(const RawTable& table);
ValidationReport validate_against_registry(const RawTable& table, const DatasetMeta& meta);

struct FetchedFile {
  std::filesystem::path path;
  std::string sha256;
  bool downloaded = false;
  bool recorded = false;  // digest newly recorded in the cache manifest
};

// Downloads missing sources into `cache_dir` and verifies each file against
// its pinned digest, or the digest recorded on first download.
std::vector<FetchedFile> fetch(const DatasetMeta& meta, const std::filesystem::path& cache_dir,
                               bool force = false);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

}  // namespace tabseq::data
