#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tabseq::cli {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitIo = 5,
};

int exit_code(const std::exception& e);
std::string_view error_kind(const std::exception& e);

// "a.b.0.c=value"; the value is parsed as JSON, falling back to a string.
void apply_assignment(nlohmann::json& config, std::string_view assignment);

// Fills defaults and checks a partial run config for its "command". Throws
// ConfigError before any compute.
nlohmann::json resolve(const nlohmann::json& partial);

// Hash of the resolved config without its output location.
std::string run_id(const nlohmann::json& resolved);

// $TABSEQ_OUTPUT_DIR, else ./runs.
std::filesystem::path default_output_root();

struct RankOutput {
  std::string policy;
  std::vector<std::string> models;
  std::vector<double> ranks;
};

// Per-model average ranks from results CSVs (mean metric over successful
// folds per dataset).
std::vector<RankOutput> rank_results(const std::vector<std::filesystem::path>& results, std::string_view tie);
std::vector<RankOutput> rank_reference(std::string_view tie);

// Entry point behind the tabseq executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tabseq::cli
