#include <fstream>
#include <functional>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "cli_internal.h"
#include "tabseq/cli.h"
#include "tabseq/data.h"
#include "tabseq/error.h"

namespace tabseq::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string output_dir;
  std::string cache_dir;
  std::optional<std::uint64_t> seed;
};

struct SynthFlags {
  std::optional<std::string> rule;
  std::optional<std::size_t> rows, numerical, categorical, categories;
  std::optional<double> noise;
  std::optional<std::string> task;
};

struct TrainFlags {
  std::vector<std::string> families;
  std::optional<std::string> dataset;
  std::optional<std::size_t> epochs, patience, batch_size, folds, workers, bins, budget_target;
  std::optional<double> lr, weight_decay;
  std::optional<std::string> scan;
  bool budget = false;
};

struct BenchFlags {
  std::vector<std::string> sweeps, families, scan_modes, passes, rank_scatter;
  std::vector<std::size_t> J, d_values;
  std::optional<std::size_t> d, repeats, warmups, batch;
  std::optional<std::string> tie;
};

struct RankFlags {
  std::vector<std::string> results;
  bool reference = false;
  std::optional<std::string> tie;
};

struct FetchFlags {
  std::vector<std::string> datasets;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run config (a config.json sidecar reruns a previous run)");
  cmd->add_option("--set", c.sets, "Override a config entry, key.path=value (repeatable)");
  cmd->add_option("--output-dir", c.output_dir, "Output directory (default $TABSEQ_OUTPUT_DIR/<command>-<run id>)");
  cmd->add_option("--cache-dir", c.cache_dir, "Dataset cache (default $TABSEQ_CACHE_DIR)");
  cmd->add_option("--seed", c.seed, "Run seed");
}

void add_synth(CLI::App* cmd, SynthFlags& s, const std::string& rule_flag) {
  cmd->add_option(rule_flag, s.rule, "Synthetic target: linear, interaction or noise");
  cmd->add_option("--rows", s.rows, "Synthetic rows");
  cmd->add_option("--numerical", s.numerical, "Synthetic numerical features");
  cmd->add_option("--categorical", s.categorical, "Synthetic categorical features");
  cmd->add_option("--categories", s.categories, "Levels per categorical feature");
  cmd->add_option("--noise", s.noise, "Noise standard deviation");
  cmd->add_option("--task", s.task, "regression or binary");
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path + " is not valid JSON");
  if (!j.is_object()) throw ConfigError("config " + path + " must hold a JSON object");
  return j;
}

template <class T>
void set_if(json& node, const char* key, const std::optional<T>& v) {
  if (v) node[key] = *v;
}

void apply_synth(json& partial, const SynthFlags& s) {
  const bool any = s.rule || s.rows || s.numerical || s.categorical || s.categories || s.noise || s.task;
  if (!any) return;
  json& data = partial["data"];
  if (!data.is_object()) data = json::object();
  data.erase("dataset");
  json& synth = data["synth"];
  if (!synth.is_object()) synth = json::object();
  set_if(synth, "rule", s.rule);
  set_if(synth, "rows", s.rows);
  set_if(synth, "numerical", s.numerical);
  set_if(synth, "categorical", s.categorical);
  set_if(synth, "categories", s.categories);
  set_if(synth, "noise", s.noise);
  set_if(synth, "task", s.task);
}

void apply_train(json& partial, const TrainFlags& t) {
  if (t.dataset) partial["data"] = {{"dataset", *t.dataset}};
  if (!t.families.empty()) {
    json models = json::array();
    if (t.families == std::vector<std::string>{"all"}) {
      for (auto f : models::all_families()) models.push_back({{"family", std::string(models::to_string(f))}});
    } else {
      for (const auto& f : t.families) models.push_back({{"family", f}});
    }
    partial["models"] = models;
  }
  if (t.scan && partial.contains("models") && partial["models"].is_array()) {
    for (auto& m : partial["models"]) {
      if (m.is_string()) m = json{{"family", m}};
      const auto family = parse_family_name(m.value("family", ""));
      if (family == models::Family::kMambular || family == models::Family::kMambAttention) m["scan"] = *t.scan;
    }
  }
  json& train = partial["train"];
  if (!train.is_object()) train = json::object();
  set_if(train, "max_epochs", t.epochs);
  set_if(train, "patience", t.patience);
  set_if(train, "batch_size", t.batch_size);
  set_if(train, "folds", t.folds);
  set_if(train, "workers", t.workers);
  set_if(train, "bins", t.bins);
  if (t.lr || t.weight_decay) {
    json& adam = train["adam"];
    if (!adam.is_object()) adam = json::object();
    set_if(adam, "lr", t.lr);
    set_if(adam, "weight_decay", t.weight_decay);
  }
  if (train.empty()) partial.erase("train");
  if (t.budget || t.budget_target) {
    json& b = partial["budget"];
    if (!b.is_object()) b = json::object();
    b["enabled"] = true;
    set_if(b, "target", t.budget_target);
  }
}

void apply_bench(json& partial, const BenchFlags& f) {
  json& b = partial["bench"];
  if (!b.is_object()) b = json::object();
  if (!f.sweeps.empty()) {
    if (f.sweeps == std::vector<std::string>{"all"}) b["sweeps"] = {"features", "embedding"};
    else b["sweeps"] = f.sweeps;
  }
  if (!f.families.empty()) b["families"] = f.families == std::vector<std::string>{"all"} ? json("all") : json(f.families);
  if (!f.scan_modes.empty()) b["scan_modes"] = f.scan_modes;
  if (!f.passes.empty()) b["passes"] = f.passes;
  // A single value fixes J for the embedding sweep; several give the feature grid.
  if (f.J.size() == 1) b["embedding_J"] = f.J.front();
  else if (!f.J.empty()) b["J_values"] = f.J;
  if (!f.d_values.empty()) b["d_values"] = f.d_values;
  set_if(b, "d", f.d);
  set_if(b, "repeats", f.repeats);
  set_if(b, "warmups", f.warmups);
  set_if(b, "batch", f.batch);
  set_if(b, "tie", f.tie);
  if (!f.rank_scatter.empty()) {
    b["rank_scatter"] = f.rank_scatter == std::vector<std::string>{"reference"} ? json("reference")
                                                                                : json(f.rank_scatter);
  }
  if (b.empty()) partial.erase("bench");
}

int execute(const std::string& command, const Common& common, const std::function<void(json&)>& apply,
            std::ostream& out, std::ostream& err) {
  json partial = common.config.empty() ? json::object() : load_config_file(common.config);
  if (partial.contains("command") && partial["command"] != command) {
    throw ConfigError("config " + common.config + " is for '" + partial["command"].dump() + "', not '" + command + "'");
  }
  partial["command"] = command;
  if (common.seed) partial["seed"] = *common.seed;
  apply(partial);
  for (const auto& s : common.sets) apply_assignment(partial, s);

  json resolved = resolve(partial);
  const std::string id = run_id(resolved);
  fs::path output_dir;
  if (!common.output_dir.empty()) output_dir = common.output_dir;
  else if (resolved["output_dir"].is_string()) output_dir = resolved["output_dir"].get<std::string>();
  else output_dir = default_output_root() / (command + "-" + id);
  resolved["output_dir"] = output_dir.string();

  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + output_dir.string() + ": " + ec.message());
  write_json(output_dir / "config.json", resolved);
  err << command << " run " << id << " -> " << output_dir.string() << '\n';

  Context ctx{resolved, id, output_dir,
              common.cache_dir.empty() ? data::default_cache_dir() : fs::path(common.cache_dir), out, err};
  if (command == "train") cmd_train(ctx);
  else if (command == "bench") cmd_bench(ctx);
  else if (command == "rank") cmd_rank(ctx);
  else if (command == "synth") cmd_synth(ctx);
  else if (command == "fetch") cmd_fetch(ctx);
  else if (command == "report") cmd_report(ctx);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tabular sequence models: training, benchmarking and data tools", "tabseq"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  Common common;
  SynthFlags synth;
  TrainFlags train;
  BenchFlags bench;
  RankFlags rank;
  FetchFlags fetch;
  std::string report_input;

  auto* train_cmd = app.add_subcommand("train", "Cross-validate models on a dataset or synthetic data");
  add_common(train_cmd, common);
  add_synth(train_cmd, synth, "--synth");
  train_cmd->add_option("--dataset", train.dataset, "Registry dataset name or abbreviation");
  train_cmd->add_option("--families", train.families, "Model families (comma separated) or all")->delimiter(',');
  train_cmd->add_option("--epochs", train.epochs, "Maximum epochs");
  train_cmd->add_option("--patience", train.patience, "Early-stopping patience");
  train_cmd->add_option("--batch-size", train.batch_size, "Training batch size");
  train_cmd->add_option("--lr", train.lr, "Adam learning rate");
  train_cmd->add_option("--weight-decay", train.weight_decay, "Decoupled weight decay");
  train_cmd->add_option("--folds", train.folds, "Cross-validation folds");
  train_cmd->add_option("--workers", train.workers, "Folds trained concurrently");
  train_cmd->add_option("--bins", train.bins, "PLE bins per numerical feature");
  train_cmd->add_option("--scan", train.scan, "SSM scan: recurrent or fused");
  train_cmd->add_flag("--budget", train.budget, "Budget every model to the parameter target");
  train_cmd->add_option("--budget-target", train.budget_target, "Parameter target (implies --budget)");

  auto* bench_cmd = app.add_subcommand("bench", "Memory and time sweeps with scaling fits and plots");
  add_common(bench_cmd, common);
  bench_cmd->add_option("--sweep", bench.sweeps, "features, embedding or all")->delimiter(',');
  bench_cmd->add_option("--families", bench.families, "Model families or all")->delimiter(',');
  bench_cmd->add_option("--scan-modes", bench.scan_modes, "recurrent,fused")->delimiter(',');
  bench_cmd->add_option("--passes", bench.passes, "forward,forward+backward")->delimiter(',');
  bench_cmd->add_option("--J", bench.J, "Feature grid, or a single J for the embedding sweep")->delimiter(',');
  bench_cmd->add_option("--d", bench.d, "Embedding size of the feature sweep");
  bench_cmd->add_option("--d-values", bench.d_values, "Embedding grid")->delimiter(',');
  bench_cmd->add_option("--repeats", bench.repeats, "Timed repeats (0 = accounting only)");
  bench_cmd->add_option("--warmups", bench.warmups, "Untimed warmup passes");
  bench_cmd->add_option("--batch", bench.batch, "Fixed batch size (default 32 below 100 features, else 8)");
  bench_cmd->add_option("--rank-scatter", bench.rank_scatter, "Results CSVs, or 'reference'")->delimiter(',');
  bench_cmd->add_option("--tie", bench.tie, "Tie policy for the rank scatter: mean or min");

  auto* rank_cmd = app.add_subcommand("rank", "Average ranks from results files");
  add_common(rank_cmd, common);
  rank_cmd->add_option("results", rank.results, "results.csv files");
  rank_cmd->add_flag("--reference", rank.reference, "Rank the published reference results");
  rank_cmd->add_option("--tie", rank.tie, "mean, min or both");

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset as CSV");
  add_common(synth_cmd, common);
  add_synth(synth_cmd, synth, "--rule");

  auto* fetch_cmd = app.add_subcommand("fetch", "Download, verify and validate registry datasets");
  add_common(fetch_cmd, common);
  fetch_cmd->add_option("datasets", fetch.datasets, "Dataset names, abbreviations or 'all'");
  fetch_cmd->add_flag("--force", fetch.force, "Download again even when cached");

  auto* report_cmd = app.add_subcommand("report", "Regenerate plots and summary from a bench directory");
  add_common(report_cmd, common);
  report_cmd->add_option("input", report_input, "Bench output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "tabseq: usage error: " << e.what() << '\n';
    return kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    std::function<void(json&)> apply = [](json&) {};
    if (command == "train") {
      apply = [&](json& p) {
        if (synth.rule && train.dataset) throw ConfigError("give either --synth or --dataset, not both");
        apply_synth(p, synth);
        apply_train(p, train);
      };
    } else if (command == "synth") {
      apply = [&](json& p) { apply_synth(p, synth); };
    } else if (command == "bench") {
      apply = [&](json& p) { apply_bench(p, bench); };
    } else if (command == "rank") {
      apply = [&](json& p) {
        json& r = p["rank"];
        if (!r.is_object()) r = json::object();
        if (!rank.results.empty()) r["results"] = rank.results;
        if (rank.reference) r["reference"] = true;
        set_if(r, "tie", rank.tie);
      };
    } else if (command == "fetch") {
      apply = [&](json& p) {
        json& f = p["fetch"];
        if (!f.is_object()) f = json::object();
        if (!fetch.datasets.empty()) f["datasets"] = fetch.datasets;
        if (fetch.force) f["force"] = true;
      };
    } else if (command == "report") {
      apply = [&](json& p) {
        if (!report_input.empty()) p["report"] = {{"input", report_input}};
      };
    }
    return execute(command, common, apply, out, err);
  } catch (const std::exception& e) {
    err << "tabseq " << command << ": " << error_kind(e) << " error: " << e.what() << '\n';
    return exit_code(e);
  }
}

}  // namespace tabseq::cli
