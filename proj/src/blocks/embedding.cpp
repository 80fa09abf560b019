#include <cmath>
#include <numeric>

#include "tabseq/blocks.h"
#include "tabseq/error.h"
#include "tabseq/ops.h"
#include "tabseq/tape.h"

namespace tabseq::nn {

using detail::grad_target;

Batch make_batch(const encoding::EncodedDataset& data) {
  std::vector<std::size_t> rows(data.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return make_batch(data, rows);
}

Batch make_batch(const encoding::EncodedDataset& data, std::span<const std::size_t> rows) {
  const std::size_t jc = data.layout.categorical_count();
  const std::size_t width = data.layout.ple_width();
  Batch batch;
  batch.rows = rows.size();
  batch.codes.reserve(rows.size() * jc);
  std::vector<double> ple;
  ple.reserve(rows.size() * width);
  for (auto r : rows) {
    if (r >= data.rows) {
      throw IndexError("batch row " + std::to_string(r) + " out of range for " + std::to_string(data.rows) +
                       " rows");
    }
    batch.codes.insert(batch.codes.end(), data.codes.begin() + static_cast<std::ptrdiff_t>(r * jc),
                       data.codes.begin() + static_cast<std::ptrdiff_t>((r + 1) * jc));
    ple.insert(ple.end(), data.ple.begin() + static_cast<std::ptrdiff_t>(r * width),
               data.ple.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
  }
  batch.ple = Tensor({rows.size(), width}, std::move(ple));
  return batch;
}

Tensor flatten_inputs(const Batch& batch, const encoding::FeatureLayout& layout) {
  const std::size_t pw = layout.ple_width();
  const std::size_t ow = layout.one_hot_width();
  const std::size_t jc = layout.categorical_count();
  if (batch.ple.numel() != batch.rows * pw || batch.codes.size() != batch.rows * jc) {
    throw DimensionError("batch does not match feature layout");
  }
  Tensor out({batch.rows, pw + ow});
  auto y = out.mutable_values();
  auto ple = batch.ple.values();
  for (std::size_t n = 0; n < batch.rows; ++n) {
    double* row = y.data() + n * (pw + ow);
    std::copy_n(ple.data() + n * pw, pw, row);
    std::size_t off = pw;
    for (std::size_t f = 0; f < jc; ++f) {
      const std::size_t code = batch.codes[n * jc + f];
      if (code >= layout.category_rows[f]) {
        throw IndexError("category code " + std::to_string(code) + " out of range for feature " +
                         std::to_string(f));
      }
      row[off + code] = 1.0;
      off += layout.category_rows[f];
    }
  }
  if (auto* tape = active_tape()) tape->charge_input(out);
  return out;
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> codes,
                        std::span<const std::size_t> table_rows, std::size_t rows) {
  if (table.rank() != 2) throw DimensionError("embedding table must be 2-D, got " + to_string(table.shape()));
  const std::size_t features = table_rows.size();
  const std::size_t d = table.dim(1);
  if (codes.size() != rows * features) {
    throw DimensionError("embedding codes: expected " + std::to_string(rows * features) + " entries, got " +
                         std::to_string(codes.size()));
  }
  std::vector<std::size_t> offsets(features);
  std::size_t total = 0;
  for (std::size_t f = 0; f < features; ++f) {
    offsets[f] = total;
    total += table_rows[f];
  }
  if (total != table.dim(0)) {
    throw DimensionError("embedding table has " + std::to_string(table.dim(0)) + " rows, layout needs " +
                         std::to_string(total));
  }
  std::vector<std::size_t> index(codes.size());
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t f = 0; f < features; ++f) {
      const std::size_t c = codes[n * features + f];
      if (c >= table_rows[f]) {
        throw IndexError("category code " + std::to_string(c) + " out of range for feature " + std::to_string(f) +
                         " with " + std::to_string(table_rows[f]) + " rows");
      }
      index[n * features + f] = offsets[f] + c;
    }
  }
  Tensor out({rows, features, d});
  auto w = table.values();
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < index.size(); ++i) std::copy_n(w.data() + index[i] * d, d, y.data() + i * d);
  if (detail::should_record({&table})) {
    detail::record(out, [table, index = std::move(index), d](std::span<const double> g) {
      auto gw = grad_target(table);
      for (std::size_t i = 0; i < index.size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) gw[index[i] * d + k] += g[i * d + k];
      }
    });
  }
  return out;
}

Tensor feature_linear(const Tensor& ple, const Tensor& weight, const Tensor& bias,
                      std::span<const std::size_t> bin_counts) {
  const std::size_t features = bin_counts.size();
  const std::size_t width = std::accumulate(bin_counts.begin(), bin_counts.end(), std::size_t{0});
  if (ple.rank() != 2 || ple.dim(1) != width || weight.rank() != 2 || weight.dim(0) != width ||
      bias.rank() != 2 || bias.dim(0) != features || bias.dim(1) != weight.dim(1)) {
    throw DimensionError("feature_linear shapes " + to_string(ple.shape()) + ", " + to_string(weight.shape()) +
                         ", " + to_string(bias.shape()) + " do not match " + std::to_string(features) +
                         " features of total width " + std::to_string(width));
  }
  const std::size_t rows = ple.dim(0);
  const std::size_t d = weight.dim(1);
  std::vector<std::size_t> offsets(features + 1, 0);
  for (std::size_t f = 0; f < features; ++f) offsets[f + 1] = offsets[f] + bin_counts[f];

  Tensor out({rows, features, d});
  auto x = ple.values();
  auto w = weight.values();
  auto b = bias.values();
  auto y = out.mutable_values();
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t f = 0; f < features; ++f) {
      double* dst = y.data() + (n * features + f) * d;
      std::copy_n(b.data() + f * d, d, dst);
      for (std::size_t t = offsets[f]; t < offsets[f + 1]; ++t) {
        const double v = x[n * width + t];
        if (v == 0.0) continue;
        const double* wr = w.data() + t * d;
        for (std::size_t k = 0; k < d; ++k) dst[k] += v * wr[k];
      }
    }
  }
  if (detail::should_record({&ple, &weight, &bias})) {
    detail::record(out, [ple, weight, bias, offsets, rows, features, width, d](std::span<const double> g) {
      auto gx = grad_target(ple);
      auto gw = grad_target(weight);
      auto gb = grad_target(bias);
      auto x = ple.values();
      auto w = weight.values();
      for (std::size_t n = 0; n < rows; ++n) {
        for (std::size_t f = 0; f < features; ++f) {
          const double* go = g.data() + (n * features + f) * d;
          if (!gb.empty()) {
            for (std::size_t k = 0; k < d; ++k) gb[f * d + k] += go[k];
          }
          for (std::size_t t = offsets[f]; t < offsets[f + 1]; ++t) {
            if (!gw.empty()) {
              const double v = x[n * width + t];
              for (std::size_t k = 0; k < d; ++k) gw[t * d + k] += v * go[k];
            }
            if (!gx.empty()) {
              double acc = 0.0;
              for (std::size_t k = 0; k < d; ++k) acc += w[t * d + k] * go[k];
              gx[n * width + t] += acc;
            }
          }
        }
      }
    });
  }
  return out;
}

FeatureEmbedding::FeatureEmbedding(const encoding::FeatureLayout& layout, std::size_t d, std::mt19937_64& rng)
    : layout_(layout), d_(d) {
  if (d == 0) throw ConfigError("embedding width must be positive");
  if (layout.feature_count() == 0) throw ConfigError("feature layout has no features");
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto fill = [&](Shape shape) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), true);
  };
  const std::size_t cat_rows =
      std::accumulate(layout.category_rows.begin(), layout.category_rows.end(), std::size_t{0});
  categorical_table = fill({cat_rows, d});
  numerical_weight = fill({layout.ple_width(), d});
  numerical_bias = fill({layout.numerical_count(), d});
}

Tensor FeatureEmbedding::forward(const Batch& batch) const {
  if (auto* tape = active_tape()) tape->charge_input(batch.ple);
  RegionScope region("embedding");
  std::vector<Tensor> parts;
  if (layout_.categorical_count() > 0) {
    parts.push_back(embedding_lookup(categorical_table, batch.codes, layout_.category_rows, batch.rows));
  }
  if (layout_.numerical_count() > 0) {
    parts.push_back(feature_linear(batch.ple, numerical_weight, numerical_bias, layout_.bin_counts));
  }
  if (parts.size() == 1) return parts[0];
  return concat(parts, 1);
}

void FeatureEmbedding::collect_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "categorical_table", categorical_table});
  out.push_back({prefix + "numerical_weight", numerical_weight});
  out.push_back({prefix + "numerical_bias", numerical_bias});
}

}  // namespace tabseq::nn
