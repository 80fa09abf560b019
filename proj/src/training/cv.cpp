#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

#include "tabseq/error.h"
#include "tabseq/rng.h"
#include "tabseq/tape.h"
#include "tabseq/training.h"

namespace tabseq::train {

namespace {

// Fisher-Yates on raw engine output, so the order does not depend on the
// standard library's distribution implementations.
void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

double loss_value(Task task, std::span<const double> pred, std::span<const double> target) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (task == Task::kRegression) {
      acc += (pred[i] - target[i]) * (pred[i] - target[i]);
    } else {
      const double z = pred[i];
      acc += std::max(z, 0.0) - z * target[i] + std::log1p(std::exp(-std::abs(z)));
    }
  }
  return acc / static_cast<double>(pred.size());
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

CVPlan make_cv_plan(std::size_t rows, std::size_t folds, std::uint64_t seed, double val_fraction) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (rows < folds) {
    throw DataError("cannot split " + std::to_string(rows) + " rows into " + std::to_string(folds) + " folds");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  CVPlan plan;
  plan.rows = rows;
  plan.seed = seed;
  std::vector<std::size_t> perm(rows);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = substream(seed, "splits");
  shuffle(perm, rng);

  std::vector<std::size_t> bounds{0};
  for (std::size_t k = 0; k < folds; ++k) bounds.push_back(bounds.back() + rows / folds + (k < rows % folds ? 1 : 0));
  for (std::size_t k = 0; k < folds; ++k) {
    Fold fold;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < rows; ++i) {
      if (i >= bounds[k] && i < bounds[k + 1]) fold.test.push_back(perm[i]);
      else rest.push_back(perm[i]);
    }
    const auto val_count = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(rest.size())));
    fold.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(val_count));
    fold.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(val_count), rest.end());
    std::sort(fold.test.begin(), fold.test.end());
    std::sort(fold.val.begin(), fold.val.end());
    std::sort(fold.train.begin(), fold.train.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"weight_decay", c.adam.weight_decay},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"batch_size", c.batch_size},
          {"eval_batch_size", c.eval_batch_size},
          {"folds", c.folds},
          {"val_fraction", c.val_fraction},
          {"bins", c.bins},
          {"seed", c.seed},
          {"workers", c.workers}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lr") c.adam.lr = value.get<double>();
      else if (key == "beta1") c.adam.beta1 = value.get<double>();
      else if (key == "beta2") c.adam.beta2 = value.get<double>();
      else if (key == "eps") c.adam.eps = value.get<double>();
      else if (key == "weight_decay") c.adam.weight_decay = value.get<double>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "eval_batch_size") c.eval_batch_size = value.get<std::size_t>();
      else if (key == "folds") c.folds = value.get<std::size_t>();
      else if (key == "val_fraction") c.val_fraction = value.get<double>();
      else if (key == "bins") c.bins = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "workers") c.workers = value.get<std::size_t>();
      else throw ConfigError("unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
  if (c.batch_size == 0 || c.eval_batch_size == 0) throw ConfigError("batch sizes must be positive");
  if (c.max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (c.adam.lr <= 0.0) throw ConfigError("learning rate must be positive");
  return c;
}

FoldResult train_fold(const FoldData& data, const models::ModelSpec& spec, const TrainConfig& config,
                      std::size_t fold, models::Model* trained) {
  const auto start = std::chrono::steady_clock::now();
  FoldResult result;
  result.fold = fold;
  result.train_rows = data.train.rows;
  result.val_rows = data.val.rows;
  result.test_rows = data.test.rows;
  if (data.train.rows == 0 || data.val.rows == 0 || data.test.rows == 0) {
    throw ContractError("fold " + std::to_string(fold) + " has an empty split");
  }
  const Task task = spec.task;
  const std::string tag = "/fold" + std::to_string(fold);
  auto init_rng = substream(config.seed, "init" + tag);
  auto batch_rng = substream(config.seed, "batching" + tag);
  models::Model model = models::build(spec, data.train.layout, init_rng);
  const auto params = model.parameters();
  Adam adam(params, config.adam);

  std::vector<std::vector<double>> best(params.size());
  auto snapshot = [&] {
    for (std::size_t i = 0; i < params.size(); ++i) {
      best[i].assign(params[i].tensor.values().begin(), params[i].tensor.values().end());
    }
  };
  snapshot();
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(data.train.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t wait = 0;
  try {
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
      shuffle(order, batch_rng);
      for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
        std::span<const std::size_t> rows(order.data() + s, std::min(config.batch_size, order.size() - s));
        nn::Batch batch = nn::make_batch(data.train, rows);
        std::vector<double> y;
        y.reserve(rows.size());
        for (auto r : rows) y.push_back(data.train.target[r]);
        Tape tape(8);
        TapeScope scope(tape);
        Tensor pred = model.forward(batch);
        Tensor l = loss(pred, Tensor({rows.size(), 1}, std::move(y)), task);
        tape.backward(l);
        adam.step();
        adam.zero_grad();
      }
      result.epochs = epoch;
      const auto val_pred = models::predict(model, data.val, config.eval_batch_size);
      const double val_loss = loss_value(task, val_pred, data.val.target);
      if (!std::isfinite(val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
      if (val_loss < result.best_val_loss) {
        result.best_val_loss = val_loss;
        result.best_epoch = epoch;
        snapshot();
        wait = 0;
      } else if (++wait >= config.patience) {
        break;
      }
    }
  } catch (const NumericError& e) {
    result.ok = false;
    result.note = std::string("diverged: ") + e.what();
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.mutable_values();
    std::copy(best[i].begin(), best[i].end(), w.begin());
  }
  const auto test_pred = models::predict(model, data.test, config.eval_batch_size);
  result.metric = task_metric(task, test_pred, data.test.target);
  const double mean = std::accumulate(data.train.target.begin(), data.train.target.end(), 0.0) /
                      static_cast<double>(data.train.rows);
  const std::vector<double> constant(data.test.rows, mean);
  result.baseline_metric = task == Task::kRegression ? metric_mse(constant, data.test.target) : 0.5;
  result.ok = true;
  if (trained) *trained = model;
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

MetricRecord run_cv(const encoding::TabularColumns& data, const models::ModelSpec& spec, const TrainConfig& config) {
  const CVPlan plan = make_cv_plan(data.rows(), config.folds, config.seed, config.val_fraction);
  MetricRecord record;
  record.metric = std::string(metric_name(spec.task));
  record.folds.resize(plan.folds.size());

  auto run_one = [&](std::size_t k) {
    const Fold& f = plan.folds[k];
    const auto train_cols = data.subset(f.train);
    const auto encoder = encoding::fit_encoder(train_cols, spec.task, config.bins);
    FoldData fd{encoder.transform(train_cols), encoder.transform(data.subset(f.val)),
                encoder.transform(data.subset(f.test))};
    record.folds[k] = train_fold(fd, spec, config, k);
  };

  const std::size_t workers = std::clamp<std::size_t>(config.workers, 1, plan.folds.size());
  if (workers == 1) {
    for (std::size_t k = 0; k < plan.folds.size(); ++k) run_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(plan.folds.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < plan.folds.size(); k = next++) {
          try {
            run_one(k);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (const auto& r : record.folds) {
    if (r.ok) record.values.push_back(r.metric);
    else ++record.failures;
  }
  if (!record.values.empty()) {
    const double n = static_cast<double>(record.values.size());
    record.mean = std::accumulate(record.values.begin(), record.values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : record.values) ss += (v - record.mean) * (v - record.mean);
    record.std = std::sqrt(ss / n);
  } else {
    record.mean = record.std = std::numeric_limits<double>::quiet_NaN();
  }
  return record;
}

void write_results_csv(const std::filesystem::path& path, const std::string& run_id,
                       const std::vector<ResultSet>& results, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "run_id,dataset,family,fold,metric,value,baseline,status,epochs,best_epoch,seed\n";
  for (const auto& set : results) {
    for (const auto& r : set.record.folds) {
      out << run_id << ',' << set.dataset << ',' << set.family << ',' << r.fold << ',' << set.record.metric << ','
          << (r.ok ? format_double(r.metric) : "") << ',' << (r.ok ? format_double(r.baseline_metric) : "") << ','
          << (r.ok ? "ok" : "failed") << ',' << r.epochs << ',' << r.best_epoch << ',' << seed << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_timings_csv(const std::filesystem::path& path, const std::string& run_id,
                       const std::vector<ResultSet>& results) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "run_id,dataset,family,fold,wall_seconds\n";
  for (const auto& set : results) {
    for (const auto& r : set.record.folds) {
      out << run_id << ',' << set.dataset << ',' << set.family << ',' << r.fold << ','
          << format_double(r.wall_seconds) << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace tabseq::train
