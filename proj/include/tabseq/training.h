#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabseq/blocks.h"
#include "tabseq/encoding.h"
#include "tabseq/models.h"

namespace tabseq::train {

using tabseq::to_string;

// Scalar losses over predictions of shape (N, 1) or (N).
Tensor mse_loss(const Tensor& pred, const Tensor& target);
// Mean binary cross-entropy on logits: max(z, 0) - z y + log(1 + exp(-|z|)).
Tensor bce_with_logits(const Tensor& logits, const Tensor& target);
Tensor loss(const Tensor& pred, const Tensor& target, Task task);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

class Adam {
 public:
  Adam(nn::ParameterList params, AdamConfig config = {});

  // Applies one update from the parameters' current grads; parameters
  // without a grad are treated as having zero gradient.
  void step();
  void zero_grad();

  std::size_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  std::span<const double> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return v_[i]; }

 private:
  nn::ParameterList params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

double metric_mse(std::span<const double> pred, std::span<const double> target);
// Mann-Whitney AUC via average ranks; ties count one half. Throws MetricError
// unless both classes are present.
double metric_auc(std::span<const double> scores, std::span<const double> labels);
// Test-set metric for the task: MSE for regression, AUC for classification.
double task_metric(Task task, std::span<const double> pred, std::span<const double> target);
std::string_view metric_name(Task task);
bool higher_is_better(Task task);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct CVPlan {
  std::size_t rows = 0;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

// Shuffled partition into `folds` test folds; validation is `val_fraction`
// of the remaining rows of each fold.
CVPlan make_cv_plan(std::size_t rows, std::size_t folds, std::uint64_t seed, double val_fraction = 0.2);

struct TrainConfig {
  AdamConfig adam;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::size_t batch_size = 128;
  std::size_t eval_batch_size = 512;
  std::size_t folds = 5;
  double val_fraction = 0.2;
  std::size_t bins = encoding::kDefaultBins;
  std::uint64_t seed = 0;
  std::size_t workers = 1;  // folds trained concurrently
};

nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct FoldResult {
  std::size_t fold = 0;
  bool ok = false;
  double metric = 0.0;
  double best_val_loss = 0.0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  std::size_t train_rows = 0, val_rows = 0, test_rows = 0;
  double baseline_metric = 0.0;  // metric of predicting the training mean
  double wall_seconds = 0.0;
  std::string note;
};

struct MetricRecord {
  std::string metric;
  std::vector<FoldResult> folds;
  std::vector<double> values;  // successful folds only
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t failures = 0;
};

// Trains one model on already-encoded splits with early stopping on the
// validation loss; returns the best checkpoint's fold result.
struct FoldData {
  encoding::EncodedDataset train;
  encoding::EncodedDataset val;
  encoding::EncodedDataset test;
};
FoldResult train_fold(const FoldData& data, const models::ModelSpec& spec, const TrainConfig& config,
                      std::size_t fold, models::Model* trained = nullptr);

// Encoders are fit on each fold's training rows only.
MetricRecord run_cv(const encoding::TabularColumns& data, const models::ModelSpec& spec, const TrainConfig& config);

enum class TiePolicy { kMean, kMin };
TiePolicy parse_tie_policy(std::string_view name);
std::string_view to_string(TiePolicy policy);

// Model x dataset metric matrix; NaN marks a missing entry.
struct RankTable {
  std::vector<std::string> models;
  std::vector<std::string> columns;
  std::vector<bool> higher_better;         // per column
  std::vector<std::vector<double>> values;  // [model][column]
};

// Per-model mean rank (1 = best) across columns.
std::vector<double> average_rank(const RankTable& table, TiePolicy policy);

// Published five-fold means of the six families on the twelve benchmark
// datasets, and their published average ranks.
RankTable reference_results();
std::vector<double> reference_average_ranks();

struct ResultSet {
  std::string dataset;
  std::string family;
  MetricRecord record;
};

// Deterministic per-fold rows:
// run_id,dataset,family,fold,metric,value,baseline,status,epochs,best_epoch,seed
void write_results_csv(const std::filesystem::path& path, const std::string& run_id,
                       const std::vector<ResultSet>& results, std::uint64_t seed);
// Wall-clock rows kept apart so result files stay bit-reproducible.
void write_timings_csv(const std::filesystem::path& path, const std::string& run_id,
                       const std::vector<ResultSet>& results);

}  // namespace tabseq::train
