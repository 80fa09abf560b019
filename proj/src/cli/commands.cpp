#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "cli_internal.h"
#include "tabseq/bench.h"
#include "tabseq/cli.h"
#include "tabseq/data.h"
#include "tabseq/error.h"
#include "tabseq/training.h"

namespace tabseq::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

models::ModelSpec spec_for_label(const std::string& label, std::size_t d) {
  constexpr std::string_view suffix = "-fused";
  if (label.size() > suffix.size() && label.ends_with(suffix)) {
    return bench::budgeted_spec(parse_family_name(label.substr(0, label.size() - suffix.size())), nn::ScanMode::kFused,
                                d);
  }
  return bench::budgeted_spec(parse_family_name(label), nn::ScanMode::kRecurrent, d);
}

struct LoadedData {
  std::string label;
  Task task = Task::kRegression;
  encoding::TabularColumns columns;
  std::size_t rows = 0;
  std::size_t dropped = 0;
  json validation = json::array();
};

LoadedData load_data(const json& data, const fs::path& cache_dir) {
  LoadedData out;
  data::RawTable raw;
  if (data.contains("synth")) {
    const auto config = data::synth_config_from_json(data.at("synth"));
    raw = data::synthesize(config);
    out.label = "synth-" + std::string(data::to_string(config.rule));
  } else {
    const auto registry = data::load_registry(data::default_registry_path());
    const auto& meta = registry.find(data.at("dataset").get<std::string>());
    raw = data::load_dataset(meta, cache_dir);
    out.label = meta.abbreviation;
    for (const auto& c : data::validate_against_registry(raw, meta).mismatches()) {
      out.validation.push_back(
          {{"field", c.field}, {"expected", c.expected}, {"observed", c.observed}, {"tolerance", c.tolerance}});
    }
  }
  out.task = raw.task;
  out.rows = raw.rows();
  auto dropped = data::drop_missing(raw);
  out.dropped = dropped.dropped;
  out.columns = data::to_columns(dropped.table);
  return out;
}

train::RankTable table_from_results(const std::vector<fs::path>& paths) {
  struct Cell {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::vector<std::string> models, columns;
  std::map<std::string, std::string> metric_of;
  std::map<std::pair<std::string, std::string>, Cell> cells;
  auto note = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& path : paths) {
    const auto doc = data::parse_csv(read_text(path), {});
    auto col = [&](const char* name) {
      auto it = std::find(doc.header.begin(), doc.header.end(), name);
      if (it == doc.header.end()) throw SchemaError(path.string() + " has no '" + name + "' column");
      return static_cast<std::size_t>(it - doc.header.begin());
    };
    const std::size_t c_dataset = col("dataset"), c_family = col("family"), c_metric = col("metric"),
                      c_value = col("value"), c_status = col("status");
    for (const auto& row : doc.rows) {
      const std::string& dataset = row[c_dataset];
      const std::string& family = row[c_family];
      note(models, family);
      note(columns, dataset);
      auto [it, fresh] = metric_of.emplace(dataset, row[c_metric]);
      if (!fresh && it->second != row[c_metric]) {
        throw DataError("dataset '" + dataset + "' is reported with both " + it->second + " and " + row[c_metric]);
      }
      auto& cell = cells[{family, dataset}];
      if (row[c_status] != "ok") continue;
      try {
        cell.sum += std::stod(row[c_value]);
      } catch (const std::logic_error&) {
        throw SchemaError(path.string() + ": bad value '" + row[c_value] + "'");
      }
      ++cell.count;
    }
  }
  if (models.empty()) throw DataError("no result rows to rank");
  train::RankTable t;
  t.models = models;
  t.columns = columns;
  for (const auto& c : columns) t.higher_better.push_back(metric_of[c] == "auc");
  for (const auto& m : models) {
    std::vector<double> row;
    for (const auto& c : columns) {
      auto it = cells.find({m, c});
      row.push_back(it == cells.end() || it->second.count == 0 ? std::nan("")
                                                                 : it->second.sum / static_cast<double>(it->second.count));
    }
    t.values.push_back(std::move(row));
  }
  return t;
}

std::vector<RankOutput> rank_table(const train::RankTable& table, std::string_view tie) {
  std::vector<train::TiePolicy> policies;
  if (tie == "both") policies = {train::TiePolicy::kMean, train::TiePolicy::kMin};
  else policies = {train::parse_tie_policy(tie)};
  std::vector<RankOutput> out;
  for (auto p : policies) out.push_back({std::string(train::to_string(p)), table.models, train::average_rank(table, p)});
  return out;
}

json files_json(const std::vector<fs::path>& files) {
  json out = json::array();
  for (const auto& f : files) out.push_back(f.filename().string());
  return out;
}

}  // namespace

std::vector<RankOutput> rank_results(const std::vector<fs::path>& results, std::string_view tie) {
  return rank_table(table_from_results(results), tie);
}

std::vector<RankOutput> rank_reference(std::string_view tie) { return rank_table(train::reference_results(), tie); }

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void cmd_train(const Context& ctx) {
  const json& c = ctx.config;
  const std::uint64_t seed = c.at("seed").get<std::uint64_t>();
  const auto data = load_data(c.at("data"), ctx.cache_dir);
  const auto config = train::train_config_from_json(c.at("train"));
  const auto layout = encoding::fit_encoder(data.columns, data.task, config.bins).layout();
  const json& budget = c.at("budget");

  std::vector<train::ResultSet> results;
  json summaries = json::array();
  for (const auto& spec_json : c.at("models")) {
    auto spec = models::spec_from_json(spec_json);
    if (budget.at("enabled").get<bool>()) {
      models::ParamBudget b;
      b.target = budget.at("target").get<std::size_t>();
      b.tolerance = budget.at("tolerance").get<double>();
      spec = models::budget(spec, layout, b);
    }
    const std::string label = bench::model_label(spec);
    ctx.err << "train " << label << " on " << data.label << " (" << data.columns.rows() << " rows, " << config.folds
            << " folds)\n";
    auto record = train::run_cv(data.columns, spec, config);
    double baseline = 0.0;
    std::size_t ok = 0;
    for (const auto& f : record.folds) {
      if (f.ok) {
        baseline += f.baseline_metric;
        ++ok;
      }
    }
    ctx.out << label << ' ' << record.metric << " = " << fmt(record.mean, "%.6g") << " +- " << fmt(record.std, "%.3g")
            << " (baseline " << fmt(ok ? baseline / static_cast<double>(ok) : std::nan(""), "%.6g") << ", "
            << record.failures << " failed folds)\n";
    summaries.push_back({{"model", label},
                         {"spec", models::to_json(spec)},
                         {"parameters", models::count_params(spec, layout)},
                         {"metric", record.metric},
                         {"values", record.values},
                         {"mean", ok ? json(record.mean) : json()},
                         {"std", ok ? json(record.std) : json()},
                         {"baseline_mean", ok ? json(baseline / static_cast<double>(ok)) : json()},
                         {"failures", record.failures}});
    results.push_back({data.label, label, std::move(record)});
  }
  const auto results_csv = ctx.output_dir / "results.csv";
  const auto timings_csv = ctx.output_dir / "timings.csv";
  train::write_results_csv(results_csv, ctx.run_id, results, seed);
  train::write_timings_csv(timings_csv, ctx.run_id, results);
  json summary{{"schema_version", kSchemaVersion},
               {"kind", "tabseq.train"},
               {"run_id", ctx.run_id},
               {"dataset", data.label},
               {"task", to_string(data.task)},
               {"rows", data.rows},
               {"dropped_rows", data.dropped},
               {"validation_mismatches", data.validation},
               {"models", summaries},
               {"files", files_json({results_csv, timings_csv, ctx.output_dir / "config.json"})}};
  write_json(ctx.output_dir / "summary.json", summary);
}

void cmd_bench(const Context& ctx) {
  const json& b = ctx.config.at("bench");
  bench::ProfileOptions options;
  options.repeats = b.at("repeats").get<std::size_t>();
  options.warmups = b.at("warmups").get<std::size_t>();
  options.seed = ctx.config.at("seed").get<std::uint64_t>();
  if (!b.at("batch").is_null()) options.batch = b.at("batch").get<std::size_t>();
  const auto d = b.at("d").get<std::size_t>();
  const auto Js = b.at("J_values").get<std::vector<std::size_t>>();
  const auto ds = b.at("d_values").get<std::vector<std::size_t>>();
  const auto embedding_J = b.at("embedding_J").get<std::size_t>();

  std::vector<models::ModelSpec> specs;
  std::vector<std::string> labels;
  for (const auto& f : b.at("families")) {
    for (const auto& s : b.at("scan_modes")) {
      auto spec = bench::budgeted_spec(parse_family_name(f.get<std::string>()),
                                       nn::parse_scan_mode(s.get<std::string>()), d);
      const auto label = bench::model_label(spec);
      if (std::find(labels.begin(), labels.end(), label) != labels.end()) continue;
      labels.push_back(label);
      specs.push_back(spec);
    }
  }

  bench::Report report;
  for (const auto& sweep_name : b.at("sweeps")) {
    const auto axis = bench::parse_axis(sweep_name.get<std::string>());
    for (const auto& p : b.at("passes")) {
      bench::Sweep sweep;
      sweep.axis = axis;
      sweep.pass = bench::parse_pass(p.get<std::string>());
      options.pass = sweep.pass;
      sweep.name = std::string(axis == bench::Axis::kFeatures ? "features" : "embedding") +
                   (sweep.pass == bench::PassKind::kForward ? "_forward" : "_backward");
      for (std::size_t i = 0; i < specs.size(); ++i) {
        ctx.err << "bench " << sweep.name << ' ' << labels[i] << '\n';
        auto recs = axis == bench::Axis::kFeatures ? bench::sweep_features(specs[i], Js, d, options)
                                                   : bench::sweep_embedding(specs[i], ds, embedding_J, options);
        sweep.records.insert(sweep.records.end(), recs.begin(), recs.end());
      }
      auto fits = bench::fit_sweep(sweep);
      report.fits.insert(report.fits.end(), fits.begin(), fits.end());
      report.sweeps.push_back(std::move(sweep));
    }
  }

  const json& scatter = b.at("rank_scatter");
  if (!scatter.is_null()) {
    const auto tie = b.at("tie").get<std::string>();
    auto ranks = scatter == json("reference")
                     ? rank_reference(tie)
                     : rank_results(std::vector<fs::path>(scatter.begin(), scatter.end()), tie);
    const auto& r = ranks.front();
    bench::ProfileOptions o = options;
    o.pass = bench::PassKind::kForward;
    o.batch = 32;
    std::vector<bench::ProfileRecord> profiles;
    for (const auto& m : r.models) {
      ctx.err << "bench rank scatter " << m << '\n';
      auto rec = bench::profile(spec_for_label(m, 64), 20, 64, o);
      rec.model = m;
      profiles.push_back(rec);
    }
    report.efficiency = bench::rank_vs_efficiency(r.models, r.ranks, profiles);
  }

  report.metadata = {{"run_id", ctx.run_id}, {"config", ctx.config}, {"environment", bench::environment()}};
  auto files = bench::emit_report(report, ctx.output_dir);
  for (const auto& f : report.fits) {
    ctx.out << f.sweep << ' ' << f.model << ' ' << f.measure << " slope " << fmt(f.fit.slope, "%.3f") << '\n';
  }
  ctx.out << "wrote " << files.size() << " files to " << ctx.output_dir.string() << '\n';
}

void cmd_rank(const Context& ctx) {
  const json& r = ctx.config.at("rank");
  const auto tie = r.at("tie").get<std::string>();
  std::vector<RankOutput> ranks;
  if (r.at("reference").get<bool>()) {
    ranks = rank_reference(tie);
  } else {
    std::vector<fs::path> paths;
    for (const auto& p : r.at("results")) paths.emplace_back(p.get<std::string>());
    ranks = rank_results(paths, tie);
  }
  const auto csv = ctx.output_dir / "ranks.csv";
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  out << "policy,model,average_rank\n";
  json doc = json::array();
  for (const auto& set : ranks) {
    ctx.out << "average rank (" << set.policy << " ties)\n";
    json entries = json::array();
    for (std::size_t i = 0; i < set.models.size(); ++i) {
      out << set.policy << ',' << csv_cell(set.models[i]) << ',' << fmt(set.ranks[i]) << '\n';
      ctx.out << "  " << set.models[i] << ' ' << fmt(set.ranks[i], "%.2f") << '\n';
      entries.push_back({{"model", set.models[i]}, {"average_rank", set.ranks[i]}});
    }
    doc.push_back({{"policy", set.policy}, {"ranks", entries}});
  }
  out.close();
  if (!out) throw IoError("failed writing " + csv.string());
  write_json(ctx.output_dir / "summary.json", {{"schema_version", kSchemaVersion},
                                               {"kind", "tabseq.rank"},
                                               {"run_id", ctx.run_id},
                                               {"policies", doc},
                                               {"files", files_json({csv, ctx.output_dir / "config.json"})}});
}

void cmd_synth(const Context& ctx) {
  const auto config = data::synth_config_from_json(ctx.config.at("data").at("synth"));
  const auto table = data::synthesize(config);
  const auto csv = ctx.output_dir / "synth.csv";
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  std::string header;
  for (const auto& n : table.categorical_names) header += n + ',';
  for (const auto& n : table.numerical_names) header += n + ',';
  out << header << table.target_name << '\n';
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (const auto& col : table.categorical) out << csv_cell(col[i].value_or("")) << ',';
    for (const auto& col : table.numerical) out << fmt(col[i]) << ',';
    out << (config.task == Task::kBinary ? fmt(table.target[i], "%.0f") : fmt(table.target[i])) << '\n';
  }
  out.close();
  if (!out) throw IoError("failed writing " + csv.string());
  ctx.out << "wrote " << table.rows() << " rows to " << csv.string() << '\n';
  write_json(ctx.output_dir / "summary.json", {{"schema_version", kSchemaVersion},
                                               {"kind", "tabseq.synth"},
                                               {"run_id", ctx.run_id},
                                               {"rows", table.rows()},
                                               {"categorical", table.categorical_names},
                                               {"numerical", table.numerical_names},
                                               {"target", table.target_name},
                                               {"files", files_json({csv, ctx.output_dir / "config.json"})}});
}

void cmd_fetch(const Context& ctx) {
  const json& f = ctx.config.at("fetch");
  const auto registry = data::load_registry(data::default_registry_path());
  const bool force = f.at("force").get<bool>();
  json entries = json::array();
  std::optional<std::pair<int, std::string>> first_error;
  for (const auto& name : f.at("datasets")) {
    const auto& meta = registry.find(name.get<std::string>());
    json entry{{"dataset", meta.name}, {"abbreviation", meta.abbreviation}};
    try {
      json files = json::array();
      for (const auto& file : data::fetch(meta, ctx.cache_dir, force)) {
        ctx.out << meta.abbreviation << ' ' << file.path.string() << ' '
                << (file.downloaded ? "downloaded" : "cached") << ' ' << file.sha256 << '\n';
        files.push_back({{"path", file.path.string()},
                         {"sha256", file.sha256},
                         {"downloaded", file.downloaded},
                         {"recorded", file.recorded}});
      }
      entry["files"] = files;
      const auto report = data::validate_against_registry(data::load_dataset(meta, ctx.cache_dir), meta);
      json checks = json::array();
      for (const auto& c : report.checks) {
        checks.push_back({{"field", c.field},
                          {"expected", c.expected},
                          {"observed", c.observed},
                          {"tolerance", c.tolerance},
                          {"ok", c.ok}});
        if (!c.ok) {
          ctx.out << meta.abbreviation << " mismatch " << c.field << ": expected " << fmt(c.expected, "%g")
                  << ", observed " << fmt(c.observed, "%g") << '\n';
        }
      }
      entry["validation"] = checks;
      entry["ok"] = report.ok();
      if (report.ok()) ctx.out << meta.abbreviation << " validated\n";
    } catch (const Error& e) {
      entry["error"] = {{"kind", error_kind(e)}, {"message", e.what()}};
      ctx.err << meta.abbreviation << ": " << error_kind(e) << " error: " << e.what() << '\n';
      if (!first_error) first_error.emplace(exit_code(e), e.what());
    }
    entries.push_back(entry);
  }
  write_json(ctx.output_dir / "summary.json", {{"schema_version", kSchemaVersion},
                                               {"kind", "tabseq.fetch"},
                                               {"run_id", ctx.run_id},
                                               {"cache_dir", ctx.cache_dir.string()},
                                               {"datasets", entries}});
  if (first_error) {
    switch (first_error->first) {
      case kExitConfig:
        throw ConfigError(first_error->second);
      case kExitData:
        throw DataError(first_error->second);
      case kExitNumeric:
        throw NumericError(first_error->second);
      case kExitIo:
        throw IoError(first_error->second);
      default:
        throw Error(first_error->second);
    }
  }
}

void cmd_report(const Context& ctx) {
  const fs::path input = ctx.config.at("report").at("input").get<std::string>();
  std::error_code ec;
  if (fs::equivalent(input, ctx.output_dir, ec)) {
    throw ConfigError("report output directory must differ from the bench directory " + input.string());
  }
  auto report = bench::load_report(input);
  auto files = bench::emit_report(report, ctx.output_dir);
  ctx.out << "wrote " << files.size() << " files to " << ctx.output_dir.string() << '\n';
}

}  // namespace tabseq::cli
