#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabseq/error.h"
#include "tabseq/training.h"

namespace tabseq::train {

double metric_mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw MetricError("mse needs equally sized, non-empty inputs (" + std::to_string(pred.size()) + " vs " +
                      std::to_string(target.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

double metric_auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) {
    throw MetricError("auc: " + std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) +
                      " labels");
  }
  std::size_t pos = 0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw MetricError("auc labels must be 0 or 1");
    if (y == 1.0) ++pos;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("auc is undefined when only one class is present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks doubled so that tied groups stay integral.
  double positive_rank_sum2 = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double rank2 = static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1.0) positive_rank_sum2 += rank2;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double u = (positive_rank_sum2 - p * (p + 1.0)) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double task_metric(Task task, std::span<const double> pred, std::span<const double> target) {
  return task == Task::kRegression ? metric_mse(pred, target) : metric_auc(pred, target);
}

std::string_view metric_name(Task task) { return task == Task::kRegression ? "mse" : "auc"; }

bool higher_is_better(Task task) { return task == Task::kBinary; }

TiePolicy parse_tie_policy(std::string_view name) {
  if (name == "mean") return TiePolicy::kMean;
  if (name == "min") return TiePolicy::kMin;
  throw ConfigError("unknown tie policy '" + std::string(name) + "' (expected mean or min)");
}

std::string_view to_string(TiePolicy policy) { return policy == TiePolicy::kMean ? "mean" : "min"; }

std::vector<double> average_rank(const RankTable& table, TiePolicy policy) {
  const std::size_t m = table.models.size();
  const std::size_t c = table.columns.size();
  if (table.values.size() != m || table.higher_better.size() != c) {
    throw DataError("rank table dimensions are inconsistent");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (table.values[i].size() != c) throw DataError("rank table row '" + table.models[i] + "' has wrong length");
    for (std::size_t k = 0; k < c; ++k) {
      if (!std::isfinite(table.values[i][k])) {
        throw DataError("missing rank table entry for model '" + table.models[i] + "' on '" + table.columns[k] +
                        "'");
      }
    }
  }
  std::vector<double> total(m, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    auto better = [&](std::size_t a, std::size_t b) {
      return table.higher_better[k] ? table.values[a][k] > table.values[b][k]
                                    : table.values[a][k] < table.values[b][k];
    };
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t ahead = 0, tied = 0;
      for (std::size_t j = 0; j < m; ++j) {
        if (better(j, i)) ++ahead;
        else if (table.values[j][k] == table.values[i][k]) ++tied;
      }
      const double first = static_cast<double>(ahead + 1);
      total[i] += policy == TiePolicy::kMin ? first : first + static_cast<double>(tied - 1) / 2.0;
    }
  }
  for (auto& t : total) t /= static_cast<double>(c);
  return total;
}

RankTable reference_results() {
  RankTable t;
  t.models = {"FTTransformer", "MLP", "ResNet", "Mambular", "MambAttention", "TabulaRNN"};
  t.columns = {"DI", "AB", "CA", "WI", "PA", "HS", "CP", "BA", "AD", "CH", "FI", "MA"};
  t.higher_better = {false, false, false, false, false, false, false, true, true, true, true, true};
  t.values = {
      {0.018, 0.458, 0.169, 0.615, 0.024, 0.111, 0.024, 0.926, 0.926, 0.863, 0.792, 0.916},
      {0.066, 0.462, 0.198, 0.654, 0.764, 0.147, 0.031, 0.895, 0.914, 0.840, 0.793, 0.886},
      {0.039, 0.455, 0.178, 0.639, 0.606, 0.141, 0.030, 0.896, 0.917, 0.841, 0.793, 0.889},
      {0.018, 0.452, 0.167, 0.628, 0.035, 0.132, 0.027, 0.927, 0.928, 0.856, 0.795, 0.917},
      {0.018, 0.484, 0.189, 0.638, 0.030, 0.142, 0.026, 0.919, 0.921, 0.857, 0.781, 0.911},
      {0.018, 0.459, 0.178, 0.659, 0.073, 0.114, 0.027, 0.930, 0.925, 0.855, 0.796, 0.922},
  };
  return t;
}

std::vector<double> reference_average_ranks() { return {2.25, 5.58, 4.25, 2.00, 3.67, 2.75}; }

}  // namespace tabseq::train
