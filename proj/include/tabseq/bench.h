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
#include "tabseq/models.h"

namespace tabseq::bench {

using tabseq::to_string;

inline constexpr std::size_t kBytesPerElement = 4;
inline constexpr std::size_t kLevels = 10;    // categorical levels per feature
inline constexpr std::size_t kBins = 64;      // PLE bins per numerical feature
inline constexpr int kReportSchemaVersion = 1;

enum class PassKind { kForward, kForwardBackward };
PassKind parse_pass(std::string_view name);
std::string_view to_string(PassKind pass);

// 32 rows below 100 features, 8 from 100 on.
std::size_t default_batch(std::size_t features);

// Layout of J simulated features: J/2 categorical with kLevels levels (plus
// the unknown slot), the rest numerical with kBins bins.
encoding::FeatureLayout simulated_layout(std::size_t features);
encoding::EncodedDataset simulated_batch(std::size_t features, std::size_t rows, std::uint64_t seed);

// Family spec budgeted to 350k parameters on the 20-feature layout at the
// given embedding size.
models::ModelSpec budgeted_spec(models::Family family, nn::ScanMode scan = nn::ScanMode::kRecurrent,
                                std::size_t d = 64);
// Family name with "-fused" appended for SSM models in fused-scan mode.
std::string model_label(const models::ModelSpec& spec);

struct ProfileOptions {
  PassKind pass = PassKind::kForward;
  std::size_t repeats = 7;  // 0 disables timing
  std::size_t warmups = 3;
  std::optional<std::size_t> batch;  // default_batch(J) when unset
  std::uint64_t seed = 0;
};

struct ProfileRecord {
  std::string model;
  std::size_t J = 0;
  std::size_t d = 0;
  std::size_t N = 0;
  PassKind pass = PassKind::kForward;
  std::size_t bytes_peak = 0;
  std::size_t bytes_retained = 0;
  double time_ns_median = 0.0;
  std::size_t repeats = 0;
  std::size_t warmups = 0;
  std::size_t bytes_grads = 0;
  std::size_t parameter_bytes = 0;
  std::map<std::string, std::size_t> region_bytes;  // activations, inputs and grads

  std::size_t region(std::string_view name) const;
};

ProfileRecord profile(const models::ModelSpec& spec, std::size_t J, std::size_t d, const ProfileOptions& options);

// Fixed spec over ascending J (at least 4 points).
std::vector<ProfileRecord> sweep_features(const models::ModelSpec& spec, const std::vector<std::size_t>& J_values,
                                          std::size_t d, const ProfileOptions& options);
// Fixed spec over ascending embedding sizes.
std::vector<ProfileRecord> sweep_embedding(const models::ModelSpec& spec, const std::vector<std::size_t>& d_values,
                                           std::size_t J, const ProfileOptions& options);

enum class Axis { kFeatures, kEmbedding };
std::string_view to_string(Axis axis);
Axis parse_axis(std::string_view name);

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<double> x;
  std::vector<double> y;
};

// Least squares on (log x, log y).
ScalingFit fit_scaling(const std::vector<double>& x, const std::vector<double>& y);
// Fits peak bytes per row (or a region's bytes per row) against the axis, so
// that batch-size switches along a sweep do not enter the exponent.
ScalingFit fit_scaling(const std::vector<ProfileRecord>& records, Axis axis, std::string_view region = "");

struct EfficiencyRow {
  std::string model;
  double average_rank = 0.0;
  std::size_t bytes = 0;
  double time_ns = 0.0;
};

std::vector<EfficiencyRow> rank_vs_efficiency(const std::vector<std::string>& models,
                                              const std::vector<double>& ranks,
                                              const std::vector<ProfileRecord>& profiles);

struct Sweep {
  std::string name;  // file stem, e.g. "features_forward"
  Axis axis = Axis::kFeatures;
  PassKind pass = PassKind::kForward;
  std::vector<ProfileRecord> records;
};

struct FitEntry {
  std::string sweep;
  std::string model;
  std::string measure;  // "peak" or a region name
  ScalingFit fit;
};

struct Report {
  std::vector<Sweep> sweeps;
  std::vector<FitEntry> fits;
  std::vector<EfficiencyRow> efficiency;
  nlohmann::json metadata;
};

// One CSV per sweep, SVG plots and summary.json. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& out_dir);

// Sweeps, fits and efficiency rows back from an emitted report directory.
Report load_report(const std::filesystem::path& dir);

void write_profile_csv(const std::filesystem::path& path, const std::vector<ProfileRecord>& records);
std::vector<ProfileRecord> read_profile_csv(const std::filesystem::path& path);

// Fits every model of a sweep on peak bytes, plus the attention region for
// models with attention layers.
std::vector<FitEntry> fit_sweep(const Sweep& sweep);

nlohmann::json environment();

}  // namespace tabseq::bench
