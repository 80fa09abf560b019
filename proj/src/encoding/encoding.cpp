#include "tabseq/encoding.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabseq/error.h"

namespace tabseq {

std::string_view to_string(Task task) {
  return task == Task::kRegression ? "regression" : "binary-classification";
}

Task parse_task(std::string_view name) {
  if (name == "regression") return Task::kRegression;
  if (name == "binary-classification" || name == "binary" || name == "classification") return Task::kBinary;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

}  // namespace tabseq

namespace tabseq::encoding {

PLEBins fit_bins(std::span<const double> values, std::size_t bins) {
  if (bins < 1) throw ConfigError("PLE bin count must be at least 1");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = std::unique(sorted.begin(), sorted.end()) - sorted.begin();
  if (distinct < 2) throw DegenerateFeatureError("feature has fewer than 2 distinct values");
  sorted.assign(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  const double last = static_cast<double>(sorted.size() - 1);
  PLEBins out;
  out.edges.reserve(bins + 1);
  for (std::size_t t = 0; t <= bins; ++t) {
    const double pos = last * static_cast<double>(t) / static_cast<double>(bins);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    const double q = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
    if (out.edges.empty() || q > out.edges.back()) out.edges.push_back(q);
  }
  return out;
}

PLEBins uniform_bins(double lo, double hi, std::size_t bins) {
  if (bins < 1 || !(hi > lo)) throw ConfigError("uniform_bins needs bins >= 1 and hi > lo");
  PLEBins out;
  for (std::size_t t = 0; t <= bins; ++t) {
    out.edges.push_back(lo + (hi - lo) * static_cast<double>(t) / static_cast<double>(bins));
  }
  return out;
}

void encode_ple_into(double x, const PLEBins& bins, std::span<double> out) {
  const std::size_t count = bins.bin_count();
  for (std::size_t t = 1; t <= count; ++t) {
    const double lo = bins.edges[t - 1];
    const double hi = bins.edges[t];
    double z;
    if (x < lo) {
      z = 0.0;
    } else if (x >= hi) {
      z = 1.0;
    } else {
      z = (x - lo) / (hi - lo);
    }
    out[t - 1] = z;
  }
}

std::vector<double> encode_ple(double x, const PLEBins& bins) {
  std::vector<double> out(bins.bin_count());
  encode_ple_into(x, bins, out);
  return out;
}

double NumericScaler::apply(double v) const {
  const double unit = (v - min) / (max - min);  // 0 at min, 1 at max
  return (-1.0 + kEps) + unit * (2.0 - 2.0 * kEps);
}

NumericScaler fit_rescale(std::span<const double> values) {
  if (values.empty()) throw DegenerateFeatureError("cannot rescale an empty column");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo)) throw DegenerateFeatureError("cannot rescale a constant column");
  return NumericScaler{*lo, *hi};
}

std::vector<double> rescale_numeric(std::span<const double> values) {
  const auto scaler = fit_rescale(values);
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [&](double v) { return scaler.apply(v); });
  return out;
}

CategoryMap::CategoryMap(std::vector<std::string> categories) : categories_(std::move(categories)) {
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    if (!index_.emplace(categories_[i], i).second) {
      throw DataError("duplicate category '" + categories_[i] + "'");
    }
  }
}

CategoryMap CategoryMap::fit(std::span<const std::string> raw) {
  std::vector<std::string> seen;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& v : raw) {
    if (index.emplace(v, seen.size()).second) seen.push_back(v);
  }
  return CategoryMap(std::move(seen));
}

std::size_t CategoryMap::code(std::string_view value) const {
  auto it = index_.find(std::string(value));
  return it == index_.end() ? unknown_code() : it->second;
}

CategoricalEncoding encode_categorical(std::span<const std::string> raw) {
  CategoricalEncoding out;
  out.map = CategoryMap::fit(raw);
  out.codes.reserve(raw.size());
  for (const auto& v : raw) out.codes.push_back(out.map.code(v));
  return out;
}

StandardizedTarget standardize_target(std::span<const double> y) {
  if (y.empty()) throw DegenerateTargetError("empty target column");
  const double n = static_cast<double>(y.size());
  const double mu = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : y) ss += (v - mu) * (v - mu);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) throw DegenerateTargetError("target has zero variance");
  StandardizedTarget out;
  out.scaler = TargetScaler{mu, sd, false};
  out.z.reserve(y.size());
  for (double v : y) out.z.push_back((v - mu) / sd);
  return out;
}

TabularColumns TabularColumns::subset(std::span<const std::size_t> rows) const {
  TabularColumns out;
  out.categorical_names = categorical_names;
  out.numerical_names = numerical_names;
  out.categorical.resize(categorical.size());
  out.numerical.resize(numerical.size());
  for (std::size_t c = 0; c < categorical.size(); ++c) {
    out.categorical[c].reserve(rows.size());
    for (auto r : rows) out.categorical[c].push_back(categorical[c].at(r));
  }
  for (std::size_t c = 0; c < numerical.size(); ++c) {
    out.numerical[c].reserve(rows.size());
    for (auto r : rows) out.numerical[c].push_back(numerical[c].at(r));
  }
  out.target.reserve(rows.size());
  for (auto r : rows) out.target.push_back(target.at(r));
  return out;
}

std::size_t FeatureLayout::ple_width() const {
  return std::accumulate(bin_counts.begin(), bin_counts.end(), std::size_t{0});
}

std::size_t FeatureLayout::one_hot_width() const {
  return std::accumulate(category_rows.begin(), category_rows.end(), std::size_t{0});
}

EncodedDataset EncodedDataset::subset(std::span<const std::size_t> idx) const {
  EncodedDataset out;
  out.layout = layout;
  out.rows = idx.size();
  const std::size_t jc = layout.categorical_count();
  const std::size_t w = layout.ple_width();
  out.codes.reserve(idx.size() * jc);
  out.ple.reserve(idx.size() * w);
  out.target.reserve(idx.size());
  for (auto r : idx) {
    if (r >= rows) throw IndexError("row " + std::to_string(r) + " out of range");
    out.codes.insert(out.codes.end(), codes.begin() + static_cast<std::ptrdiff_t>(r * jc),
                     codes.begin() + static_cast<std::ptrdiff_t>((r + 1) * jc));
    out.ple.insert(out.ple.end(), ple.begin() + static_cast<std::ptrdiff_t>(r * w),
                   ple.begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
    out.target.push_back(target[r]);
  }
  return out;
}

FeatureLayout DatasetEncoder::layout() const {
  FeatureLayout l;
  for (const auto& m : categories) l.category_rows.push_back(m.table_rows());
  for (const auto& b : bins) l.bin_counts.push_back(b.bin_count());
  return l;
}

EncodedDataset DatasetEncoder::transform(const TabularColumns& columns) const {
  if (columns.categorical.size() != categories.size() || columns.numerical.size() != bins.size()) {
    throw ContractError("column counts do not match the fitted encoder");
  }
  EncodedDataset out;
  out.layout = layout();
  out.rows = columns.rows();
  const std::size_t jc = categories.size();
  const std::size_t w = out.layout.ple_width();
  out.codes.resize(out.rows * jc);
  out.ple.resize(out.rows * w);
  out.target.resize(out.rows);
  for (std::size_t c = 0; c < jc; ++c) {
    if (columns.categorical[c].size() != out.rows) throw ContractError("ragged categorical column");
    for (std::size_t r = 0; r < out.rows; ++r) out.codes[r * jc + c] = categories[c].code(columns.categorical[c][r]);
  }
  std::size_t offset = 0;
  for (std::size_t c = 0; c < bins.size(); ++c) {
    if (columns.numerical[c].size() != out.rows) throw ContractError("ragged numerical column");
    const std::size_t t = bins[c].bin_count();
    for (std::size_t r = 0; r < out.rows; ++r) {
      const double x = scalers[c].apply(columns.numerical[c][r]);
      encode_ple_into(x, bins[c], std::span<double>(out.ple.data() + r * w + offset, t));
    }
    offset += t;
  }
  for (std::size_t r = 0; r < out.rows; ++r) out.target[r] = target.apply(columns.target[r]);
  return out;
}

DatasetEncoder fit_encoder(const TabularColumns& train, Task task, std::size_t bin_count) {
  DatasetEncoder enc;
  enc.task = task;
  enc.categorical_names = train.categorical_names;
  enc.numerical_names = train.numerical_names;
  for (std::size_t c = 0; c < train.numerical.size(); ++c) {
    try {
      const auto scaler = fit_rescale(train.numerical[c]);
      std::vector<double> scaled(train.numerical[c].size());
      std::transform(train.numerical[c].begin(), train.numerical[c].end(), scaled.begin(),
                     [&](double v) { return scaler.apply(v); });
      enc.scalers.push_back(scaler);
      enc.bins.push_back(fit_bins(scaled, bin_count));
    } catch (const DegenerateFeatureError& e) {
      const auto name = c < train.numerical_names.size() ? train.numerical_names[c] : std::to_string(c);
      throw DegenerateFeatureError("numerical feature '" + name + "': " + e.what());
    }
  }
  for (const auto& col : train.categorical) enc.categories.push_back(CategoryMap::fit(col));
  if (task == Task::kRegression) {
    enc.target = standardize_target(train.target).scaler;
  } else {
    enc.target = TargetScaler{};
  }
  return enc;
}

nlohmann::json DatasetEncoder::to_json() const {
  nlohmann::json doc;
  doc["schema_version"] = kEncoderSchemaVersion;
  doc["kind"] = "tabseq.encoder";
  doc["task"] = std::string(tabseq::to_string(task));
  doc["binning"] = binning;
  auto& cats = doc["categorical"] = nlohmann::json::array();
  for (std::size_t c = 0; c < categories.size(); ++c) {
    cats.push_back({{"name", c < categorical_names.size() ? categorical_names[c] : ""},
                    {"categories", categories[c].categories()}});
  }
  auto& nums = doc["numerical"] = nlohmann::json::array();
  for (std::size_t c = 0; c < bins.size(); ++c) {
    nums.push_back({{"name", c < numerical_names.size() ? numerical_names[c] : ""},
                    {"min", scalers[c].min},
                    {"max", scalers[c].max},
                    {"edges", bins[c].edges}});
  }
  doc["target"] = {{"mean", target.mean}, {"std", target.std}, {"identity", target.identity}};
  return doc;
}

DatasetEncoder DatasetEncoder::from_json(const nlohmann::json& doc) {
  if (doc.value("kind", "") != "tabseq.encoder") throw DataError("not an encoder document");
  const int version = doc.value("schema_version", 0);
  if (version != kEncoderSchemaVersion) {
    throw DataError("unsupported encoder schema version " + std::to_string(version));
  }
  DatasetEncoder enc;
  enc.task = parse_task(doc.at("task").get<std::string>());
  enc.binning = doc.value("binning", "quantile");
  for (const auto& c : doc.at("categorical")) {
    enc.categorical_names.push_back(c.at("name").get<std::string>());
    enc.categories.emplace_back(c.at("categories").get<std::vector<std::string>>());
  }
  for (const auto& n : doc.at("numerical")) {
    enc.numerical_names.push_back(n.at("name").get<std::string>());
    enc.scalers.push_back(NumericScaler{n.at("min").get<double>(), n.at("max").get<double>()});
    enc.bins.push_back(PLEBins{n.at("edges").get<std::vector<double>>()});
  }
  const auto& t = doc.at("target");
  enc.target = TargetScaler{t.at("mean").get<double>(), t.at("std").get<double>(), t.at("identity").get<bool>()};
  return enc;
}

}  // namespace tabseq::encoding
