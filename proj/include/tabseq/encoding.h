#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace tabseq {

enum class Task { kRegression, kBinary };

std::string_view to_string(Task task);
Task parse_task(std::string_view name);

}  // namespace tabseq

namespace tabseq::encoding {

inline constexpr std::size_t kDefaultBins = 64;
inline constexpr int kEncoderSchemaVersion = 1;

// Bin boundaries b_0 < b_1 < ... < b_T for piecewise linear encoding.
struct PLEBins {
  std::vector<double> edges;

  std::size_t bin_count() const { return edges.empty() ? 0 : edges.size() - 1; }
};

// Empirical quantile edges at levels 0, 1/T, ..., 1 (linear interpolation
// between order statistics). Coinciding quantiles are merged, so the fitted
// bin count can be lower than requested.
PLEBins fit_bins(std::span<const double> values, std::size_t bins = kDefaultBins);

// Evenly spaced edges over [lo, hi]; used where no data is available to fit.
PLEBins uniform_bins(double lo, double hi, std::size_t bins);

// Component t is 0 below b_{t-1}, 1 at or above b_t and the linear ramp in
// between. Components are non-increasing in t and lie in [0, 1].
std::vector<double> encode_ple(double x, const PLEBins& bins);
void encode_ple_into(double x, const PLEBins& bins, std::span<double> out);

// Affine map sending the fitted min to -1+eps and max to 1-eps.
struct NumericScaler {
  static constexpr double kEps = 1e-6;
  double min = 0.0;
  double max = 1.0;

  double apply(double v) const;
};

NumericScaler fit_rescale(std::span<const double> values);
std::vector<double> rescale_numeric(std::span<const double> values);

// First-appearance integer codes 0..K-1; everything unseen maps to K.
class CategoryMap {
 public:
  CategoryMap() = default;
  explicit CategoryMap(std::vector<std::string> categories);

  static CategoryMap fit(std::span<const std::string> raw);

  std::size_t code(std::string_view value) const;
  std::size_t known_count() const { return categories_.size(); }
  std::size_t unknown_code() const { return categories_.size(); }
  // Rows needed in an embedding table: known categories plus the unknown slot.
  std::size_t table_rows() const { return categories_.size() + 1; }
  const std::vector<std::string>& categories() const { return categories_; }

 private:
  std::vector<std::string> categories_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct CategoricalEncoding {
  std::vector<std::size_t> codes;
  CategoryMap map;
};

CategoricalEncoding encode_categorical(std::span<const std::string> raw);

// z = (y - mean) / std with the population standard deviation. For
// classification targets the scaler is the identity.
struct TargetScaler {
  double mean = 0.0;
  double std = 1.0;
  bool identity = true;

  double apply(double y) const { return identity ? y : (y - mean) / std; }
  double invert(double z) const { return identity ? z : z * std + mean; }
};

struct StandardizedTarget {
  std::vector<double> z;
  TargetScaler scaler;
};

StandardizedTarget standardize_target(std::span<const double> y);

// Raw feature columns (already cleaned of missing values) of one dataset.
struct TabularColumns {
  std::vector<std::string> categorical_names;
  std::vector<std::string> numerical_names;
  std::vector<std::vector<std::string>> categorical;
  std::vector<std::vector<double>> numerical;
  std::vector<double> target;

  std::size_t rows() const { return target.size(); }
  TabularColumns subset(std::span<const std::size_t> rows) const;
};

// Shape information a model needs about its inputs.
struct FeatureLayout {
  std::vector<std::size_t> category_rows;  // K_j + 1 per categorical feature
  std::vector<std::size_t> bin_counts;     // T_j per numerical feature

  std::size_t categorical_count() const { return category_rows.size(); }
  std::size_t numerical_count() const { return bin_counts.size(); }
  std::size_t feature_count() const { return category_rows.size() + bin_counts.size(); }
  std::size_t ple_width() const;
  std::size_t one_hot_width() const;
  bool operator==(const FeatureLayout&) const = default;
};

// Model-ready rows: integer codes (rows x J_cat), packed PLE (rows x sum T_j)
// and the scaled target.
struct EncodedDataset {
  FeatureLayout layout;
  std::size_t rows = 0;
  std::vector<std::size_t> codes;
  std::vector<double> ple;
  std::vector<double> target;

  EncodedDataset subset(std::span<const std::size_t> rows) const;
};

// Encoders fitted on training rows and applied unchanged to every split.
struct DatasetEncoder {
  Task task = Task::kRegression;
  std::string binning = "quantile";
  std::vector<std::string> categorical_names;
  std::vector<std::string> numerical_names;
  std::vector<CategoryMap> categories;
  std::vector<NumericScaler> scalers;
  std::vector<PLEBins> bins;
  TargetScaler target;

  FeatureLayout layout() const;
  EncodedDataset transform(const TabularColumns& columns) const;

  nlohmann::json to_json() const;
  static DatasetEncoder from_json(const nlohmann::json& doc);
};

// Rescale -> fit PLE bins -> integer-encode categoricals -> standardize
// target, all on `train` only.
DatasetEncoder fit_encoder(const TabularColumns& train, Task task, std::size_t bins = kDefaultBins);

}  // namespace tabseq::encoding
