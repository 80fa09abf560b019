#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

#include "tabseq/bench.h"
#include "tabseq/error.h"
#include "tabseq/rng.h"
#include "tabseq/tape.h"
#include "tabseq/training.h"

namespace tabseq::bench {

namespace {

using Clock = std::chrono::steady_clock;

bool has_ssm(models::Family f) { return f == models::Family::kMambular || f == models::Family::kMambAttention; }

bool has_attention(models::Family f) {
  return f == models::Family::kMambAttention || f == models::Family::kFTTransformer;
}

void run_pass(const models::Model& model, const nn::Batch& batch, const Tensor& target, PassKind pass, Tape& tape) {
  TapeScope scope(tape);
  Tensor out = model.forward(batch);
  for (double v : out.values()) {
    if (!std::isfinite(v)) throw NumericError("non-finite model output while profiling");
  }
  if (pass == PassKind::kForwardBackward) tape.backward(train::mse_loss(out, target));
}

template <typename Fn>
auto with_context(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError(where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(where + ": " + e.what());
  }
}

void require_ascending(const std::vector<std::size_t>& v, const char* what, std::size_t min_points) {
  if (v.size() < min_points) {
    throw ConfigError(std::string(what) + " sweep needs at least " + std::to_string(min_points) + " points, got " +
                      std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 0) throw ConfigError(std::string(what) + " values must be positive");
    if (i > 0 && v[i] <= v[i - 1]) throw ConfigError(std::string(what) + " values must be strictly ascending");
  }
}

}  // namespace

PassKind parse_pass(std::string_view name) {
  if (name == "forward" || name == "fwd") return PassKind::kForward;
  if (name == "forward+backward" || name == "backward" || name == "fwd+bwd") return PassKind::kForwardBackward;
  throw ConfigError("unknown pass '" + std::string(name) + "' (expected forward or forward+backward)");
}

std::string_view to_string(PassKind pass) { return pass == PassKind::kForward ? "forward" : "forward+backward"; }

std::string_view to_string(Axis axis) { return axis == Axis::kFeatures ? "J" : "d"; }

Axis parse_axis(std::string_view name) {
  if (name == "J" || name == "features") return Axis::kFeatures;
  if (name == "d" || name == "embedding") return Axis::kEmbedding;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "' (expected features or embedding)");
}

std::size_t default_batch(std::size_t features) { return features < 100 ? 32 : 8; }

encoding::FeatureLayout simulated_layout(std::size_t features) {
  encoding::FeatureLayout layout;
  const std::size_t cat = features / 2;
  layout.category_rows.assign(cat, kLevels + 1);
  layout.bin_counts.assign(features - cat, kBins);
  return layout;
}

encoding::EncodedDataset simulated_batch(std::size_t features, std::size_t rows, std::uint64_t seed) {
  if (features == 0 || rows == 0) throw ConfigError("simulated batch needs features and rows");
  auto rng = substream(seed, "bench/data/" + std::to_string(features));
  auto u = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  encoding::EncodedDataset ds;
  ds.layout = simulated_layout(features);
  ds.rows = rows;
  const auto bins = encoding::uniform_bins(-1.0, 1.0, kBins);
  const std::size_t jc = ds.layout.categorical_count();
  const std::size_t jn = ds.layout.numerical_count();
  ds.codes.reserve(rows * jc);
  ds.ple.assign(rows * jn * kBins, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < jc; ++j) ds.codes.push_back(static_cast<std::size_t>(rng() % kLevels));
    for (std::size_t j = 0; j < jn; ++j) {
      encoding::encode_ple_into(2.0 * u() - 1.0, bins,
                                std::span<double>(ds.ple).subspan((i * jn + j) * kBins, kBins));
    }
    ds.target.push_back(2.0 * u() - 1.0);
  }
  return ds;
}

models::ModelSpec budgeted_spec(models::Family family, nn::ScanMode scan, std::size_t d) {
  auto spec = models::default_spec(family);
  spec.d = d;
  spec.scan = scan;
  return models::budget(spec, simulated_layout(20), {});
}

std::string model_label(const models::ModelSpec& spec) {
  std::string label(models::to_string(spec.family));
  if (has_ssm(spec.family) && spec.scan == nn::ScanMode::kFused) label += "-fused";
  return label;
}

std::size_t ProfileRecord::region(std::string_view name) const {
  auto it = region_bytes.find(std::string(name));
  return it == region_bytes.end() ? 0 : it->second;
}

ProfileRecord profile(const models::ModelSpec& base, std::size_t J, std::size_t d, const ProfileOptions& options) {
  auto spec = base;
  spec.d = d;
  spec.validate();
  const std::size_t N = options.batch.value_or(default_batch(J));
  if (N == 0) throw ConfigError("profile batch size must be positive");

  const auto data = simulated_batch(J, N, options.seed);
  auto init = substream(options.seed, "bench/init");
  const auto model = models::build(spec, data.layout, init);
  const auto batch = nn::make_batch(data);
  const Tensor target({N, 1}, data.target);
  auto params = model.parameters();
  auto zero = [&] {
    for (auto& p : params) p.tensor.zero_grad();
  };

  ProfileRecord r;
  r.model = model_label(spec);
  r.J = J;
  r.d = d;
  r.N = N;
  r.pass = options.pass;
  r.parameter_bytes = models::count_params(model) * kBytesPerElement;
  {
    Tape tape(kBytesPerElement);
    run_pass(model, batch, target, options.pass, tape);
    r.bytes_peak = tape.peak_bytes();
    r.bytes_retained = tape.retained_bytes();
    r.bytes_grads = tape.grad_bytes();
    for (const auto& [name, b] : tape.regions()) r.region_bytes[name] = b.activations + b.inputs + b.grads;
    zero();
  }

  if (options.repeats > 0) {
    r.repeats = options.repeats;
    r.warmups = options.warmups;
    std::vector<double> times;
    for (std::size_t i = 0; i < options.warmups + options.repeats; ++i) {
      Tape tape(kBytesPerElement);
      const auto t0 = Clock::now();
      run_pass(model, batch, target, options.pass, tape);
      const auto t1 = Clock::now();
      zero();
      if (i >= options.warmups) times.push_back(static_cast<double>((t1 - t0).count()));
    }
    std::sort(times.begin(), times.end());
    const std::size_t m = times.size();
    r.time_ns_median = m % 2 ? times[m / 2] : 0.5 * (times[m / 2 - 1] + times[m / 2]);
    r.time_ns_median = std::max(r.time_ns_median, 1.0);
  }
  return r;
}

std::vector<ProfileRecord> sweep_features(const models::ModelSpec& spec, const std::vector<std::size_t>& J_values,
                                          std::size_t d, const ProfileOptions& options) {
  require_ascending(J_values, "J", 4);
  std::vector<ProfileRecord> out;
  for (auto J : J_values) {
    out.push_back(with_context(model_label(spec) + " at J=" + std::to_string(J),
                               [&] { return profile(spec, J, d, options); }));
  }
  return out;
}

std::vector<ProfileRecord> sweep_embedding(const models::ModelSpec& spec, const std::vector<std::size_t>& d_values,
                                           std::size_t J, const ProfileOptions& options) {
  require_ascending(d_values, "d", 1);
  if (has_attention(spec.family)) {
    for (auto d : d_values) {
      if (d % spec.heads != 0) {
        throw ConfigError("embedding size d=" + std::to_string(d) + " is not divisible by " +
                          std::to_string(spec.heads) + " heads");
      }
    }
  }
  std::vector<ProfileRecord> out;
  for (auto d : d_values) {
    out.push_back(with_context(model_label(spec) + " at d=" + std::to_string(d),
                               [&] { return profile(spec, J, d, options); }));
  }
  return out;
}

ScalingFit fit_scaling(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ConfigError("fit_scaling needs equally many x and y values");
  if (x.size() < 4) throw ConfigError("fit_scaling needs at least 4 points, got " + std::to_string(x.size()));
  ScalingFit f;
  f.x = x;
  f.y = y;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw NumericError("fit_scaling needs positive values, got (" + std::to_string(x[i]) + ", " +
                         std::to_string(y[i]) + ")");
    }
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / n;
    my += ly[i] / n;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("fit_scaling needs at least two distinct x values");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - (f.intercept + f.slope * lx[i]);
    ss_res += e * e;
  }
  f.r2 = syy == 0.0 ? 1.0 : std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  return f;
}

ScalingFit fit_scaling(const std::vector<ProfileRecord>& records, Axis axis, std::string_view region) {
  std::vector<double> x, y;
  for (const auto& r : records) {
    x.push_back(static_cast<double>(axis == Axis::kFeatures ? r.J : r.d));
    const double bytes = static_cast<double>(region.empty() ? r.bytes_peak : r.region(region));
    y.push_back(bytes / static_cast<double>(r.N));
  }
  return fit_scaling(x, y);
}

std::vector<EfficiencyRow> rank_vs_efficiency(const std::vector<std::string>& models, const std::vector<double>& ranks,
                                              const std::vector<ProfileRecord>& profiles) {
  if (models.size() != ranks.size()) throw ConfigError("rank_vs_efficiency: models and ranks differ in length");
  std::vector<EfficiencyRow> out;
  for (std::size_t i = 0; i < models.size(); ++i) {
    auto it = std::find_if(profiles.begin(), profiles.end(), [&](const ProfileRecord& p) { return p.model == models[i]; });
    if (it == profiles.end()) throw DataError("no profile for model '" + models[i] + "'");
    out.push_back({models[i], ranks[i], it->bytes_peak, it->time_ns_median});
  }
  for (const auto& p : profiles) {
    if (std::find(models.begin(), models.end(), p.model) == models.end()) {
      throw DataError("no rank for profiled model '" + p.model + "'");
    }
  }
  return out;
}

std::vector<FitEntry> fit_sweep(const Sweep& sweep) {
  std::map<std::string, std::vector<ProfileRecord>> by_model;
  std::vector<std::string> order;
  for (const auto& r : sweep.records) {
    if (!by_model.count(r.model)) order.push_back(r.model);
    by_model[r.model].push_back(r);
  }
  std::vector<FitEntry> out;
  for (const auto& m : order) {
    const auto& recs = by_model[m];
    if (recs.size() < 4) continue;
    out.push_back({sweep.name, m, "peak", fit_scaling(recs, sweep.axis)});
    if (recs.front().region("attention") > 0) {
      out.push_back({sweep.name, m, "attention", fit_scaling(recs, sweep.axis, "attention")});
    }
  }
  return out;
}

nlohmann::json environment() {
  std::string cpu = "unknown";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  return {{"cpu", cpu}, {"hardware_threads", std::thread::hardware_concurrency()}, {"worker_threads", 1},
          {"bytes_per_element", kBytesPerElement}};
}

}  // namespace tabseq::bench
