#include <cstdlib>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "tabseq/cli.h"
#include "tabseq/data.h"
#include "tabseq/error.h"

using namespace tabseq;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result tabseq_run(std::vector<std::string> args) {
  args.insert(args.begin(), "tabseq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("tabseq_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_config(const fs::path& dir, const json& config) {
  const auto p = dir / "in.json";
  std::ofstream(p) << config.dump(2);
  return p;
}

json small_train_config() {
  return {{"command", "train"},
          {"seed", 11},
          {"data", {{"synth", {{"rule", "linear"}, {"rows", 150}, {"numerical", 3}, {"categorical", 2}}}}},
          {"models", {{{"family", "TabulaRNN"}, {"d", 8}, {"rnn_hidden", 8}, {"layers", 1}, {"head_hidden", 8}}}},
          {"train", {{"max_epochs", 2}, {"folds", 5}}}};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("usage and exit codes") {
  CHECK(tabseq_run({"--help"}).code == 0);
  CHECK(tabseq_run({}).code == cli::kExitConfig);
  CHECK(tabseq_run({"frobnicate"}).code == cli::kExitConfig);
  CHECK(cli::exit_code(ConfigError("x")) == 2);
  CHECK(cli::exit_code(BudgetError("x", 1)) == 2);
  CHECK(cli::exit_code(SchemaError("x")) == 3);
  CHECK(cli::exit_code(NumericError("x")) == 4);
  CHECK(cli::exit_code(NetworkError("x")) == 5);
  CHECK(cli::exit_code(IntegrityError("x")) == 5);
  CHECK(cli::exit_code(std::runtime_error("x")) == 1);
  CHECK(cli::error_kind(NetworkError("x")) == "network");
}

TEST_CASE("config assignments") {
  json c{{"models", {{{"family", "MLP"}}}}};
  cli::apply_assignment(c, "train.adam.lr=0.01");
  cli::apply_assignment(c, "models.0.width=32");
  cli::apply_assignment(c, "data.synth.rule=interaction");
  cli::apply_assignment(c, "bench.J_values=[4,8,16,32]");
  CHECK(c["train"]["adam"]["lr"] == 0.01);
  CHECK(c["models"][0]["width"] == 32);
  CHECK(c["data"]["synth"]["rule"] == "interaction");
  CHECK(c["bench"]["J_values"].size() == 4);
  CHECK_THROWS_AS(cli::apply_assignment(c, "novalue"), ConfigError);
  CHECK_THROWS_AS(cli::apply_assignment(c, "models.3.width=1"), ConfigError);
  CHECK_THROWS_AS(cli::apply_assignment(c, "a..b=1"), ConfigError);
}

TEST_CASE("resolution fills defaults and rejects bad configs") {
  auto r = cli::resolve(small_train_config());
  CHECK(r["train"]["seed"] == 11);
  CHECK(r["data"]["synth"]["seed"] == 11);
  CHECK(r["train"]["batch_size"] == 128);
  CHECK(r["budget"]["enabled"] == false);
  CHECK(r["models"][0]["task"] == "regression");

  auto id = cli::run_id(r);
  r["output_dir"] = "/somewhere/else";
  CHECK(cli::run_id(r) == id);
  r["train"]["max_epochs"] = 3;
  CHECK(cli::run_id(r) != id);

  auto no_seed = small_train_config();
  no_seed.erase("seed");
  CHECK_THROWS_AS(cli::resolve(no_seed), ConfigError);
  auto two_sources = small_train_config();
  two_sources["data"]["dataset"] = "abalone";
  CHECK_THROWS_AS(cli::resolve(two_sources), ConfigError);
  auto no_source = small_train_config();
  no_source.erase("data");
  CHECK_THROWS_AS(cli::resolve(no_source), ConfigError);
  auto unknown = small_train_config();
  unknown["colour"] = "blue";
  CHECK_THROWS_AS(cli::resolve(unknown), ConfigError);
  auto ft = small_train_config();
  ft["models"] = {"ft-transformer"};
  CHECK(cli::resolve(ft)["models"][0]["family"] == "FTTransformer");
}

TEST_CASE("train writes results, summary and sidecar") {
  TempDir tmp("train");
  const auto cfg = write_config(tmp.path, small_train_config());
  const auto a = tmp.path / "a";
  auto r = tabseq_run({"train", "--config", cfg.string(), "--output-dir", a.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(count_lines(slurp(a / "results.csv")) == 1 + 5);
  CHECK(count_lines(slurp(a / "timings.csv")) == 1 + 5);
  auto summary = json::parse(slurp(a / "summary.json"));
  CHECK(summary["schema_version"] == cli::kSchemaVersion);
  CHECK(summary["models"].size() == 1);
  auto sidecar = json::parse(slurp(a / "config.json"));
  CHECK(sidecar["output_dir"] == a.string());
  CHECK(sidecar["train"]["max_epochs"] == 2);

  const auto b = tmp.path / "b";
  r = tabseq_run({"train", "--config", cfg.string(), "--output-dir", b.string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));

  const auto c = tmp.path / "c";
  r = tabseq_run({"train", "--config", (a / "config.json").string(), "--output-dir", c.string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(a / "results.csv") == slurp(c / "results.csv"));

  const auto d = tmp.path / "d";
  r = tabseq_run({"train", "--config", cfg.string(), "--output-dir", d.string(), "--seed", "12"});
  REQUIRE(r.code == 0);
  CHECK(slurp(a / "results.csv") != slurp(d / "results.csv"));
  CHECK(json::parse(slurp(d / "config.json"))["data"]["synth"]["seed"] == 12);
}

TEST_CASE("train config errors stop before compute") {
  TempDir tmp("bad");
  const auto out = tmp.path / "never";
  auto r = tabseq_run({"train", "--synth", "linear", "--families", "Perceptron", "--seed", "1", "--output-dir",
                       out.string()});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("Perceptron") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
  r = tabseq_run({"train", "--synth", "linear", "--families", "MLP", "--output-dir", out.string()});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("seed") != std::string::npos);
  r = tabseq_run({"train", "--seed", "1", "--families", "MLP", "--synth", "cubic", "--output-dir", out.string()});
  CHECK(r.code == cli::kExitConfig);
  CHECK_FALSE(fs::exists(out));
  const auto bench_cfg = write_config(tmp.path, {{"command", "bench"}, {"seed", 1}});
  r = tabseq_run({"train", "--config", bench_cfg.string()});
  CHECK(r.code == cli::kExitConfig);
}

TEST_CASE("rank command") {
  TempDir tmp("rank");
  auto r = tabseq_run({"rank", "--reference", "--tie", "both", "--output-dir", (tmp.path / "ref").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("(mean ties)") != std::string::npos);
  CHECK(r.out.find("(min ties)") != std::string::npos);
  const auto ranks = slurp(tmp.path / "ref" / "ranks.csv");
  CHECK(count_lines(ranks) == 1 + 12);

  std::ofstream(tmp.path / "one.csv") << "run_id,dataset,family,fold,metric,value,baseline,status,epochs,best_epoch,seed\n"
                                          "x,A,Solo,0,mse,0.5,1,ok,1,1,0\n"
                                          "x,B,Solo,0,auc,0.7,0.5,ok,1,1,0\n";
  r = tabseq_run({"rank", (tmp.path / "one.csv").string(), "--output-dir", (tmp.path / "one").string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(tmp.path / "one" / "ranks.csv") == "policy,model,average_rank\nmean,Solo,1\n");

  std::ofstream(tmp.path / "gap.csv") << "run_id,dataset,family,fold,metric,value,baseline,status,epochs,best_epoch,seed\n"
                                          "x,A,P,0,mse,0.5,1,ok,1,1,0\n"
                                          "x,A,Q,0,mse,0.4,1,ok,1,1,0\n"
                                          "x,B,P,0,mse,0.3,1,ok,1,1,0\n";
  r = tabseq_run({"rank", (tmp.path / "gap.csv").string(), "--output-dir", (tmp.path / "gap").string()});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("'Q'") != std::string::npos);
  CHECK(r.err.find("'B'") != std::string::npos);

  r = tabseq_run({"rank", "--output-dir", (tmp.path / "none").string()});
  CHECK(r.code == cli::kExitConfig);
}

TEST_CASE("bench reruns and report regeneration") {
  TempDir tmp("bench");
  const auto a = tmp.path / "a";
  auto r = tabseq_run({"bench", "--seed", "5", "--repeats", "0", "--families", "TabulaRNN,FTTransformer,Mambular",
                       "--J", "4,8,12,16", "--d-values", "8,16,24,32", "--output-dir", a.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  for (const char* f : {"features_forward.csv", "features_backward.csv", "embedding_forward.csv",
                        "embedding_backward.csv", "summary.json", "config.json", "memory_vs_embedding.svg"}) {
    CHECK_MESSAGE(fs::exists(a / f), f);
  }
  const auto b = tmp.path / "b";
  r = tabseq_run({"bench", "--config", (a / "config.json").string(), "--output-dir", b.string()});
  REQUIRE(r.code == 0);
  for (const char* f : {"features_forward.csv", "features_backward.csv", "embedding_forward.csv",
                        "embedding_backward.csv"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto c = tmp.path / "c";
  r = tabseq_run({"report", a.string(), "--output-dir", c.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(slurp(a / "features_forward.csv") == slurp(c / "features_forward.csv"));
  CHECK(json::parse(slurp(a / "summary.json"))["fits"] == json::parse(slurp(c / "summary.json"))["fits"]);

  r = tabseq_run({"report", a.string(), "--output-dir", a.string()});
  CHECK(r.code == cli::kExitConfig);
  r = tabseq_run({"bench", "--seed", "5", "--J", "4,8", "--output-dir", (tmp.path / "x").string()});
  CHECK(r.code == cli::kExitConfig);
}

TEST_CASE("synth command") {
  TempDir tmp("synth");
  auto r = tabseq_run({"synth", "--seed", "4", "--rule", "interaction", "--rows", "20", "--numerical", "2",
                       "--categorical", "2", "--output-dir", tmp.path.string()});
  REQUIRE(r.code == 0);
  const auto text = slurp(tmp.path / "synth.csv");
  CHECK(count_lines(text) == 21);
  CHECK(text.rfind("cat_0,cat_1,num_0,num_1,y\n", 0) == 0);
  auto table = data::synthesize(data::synth_config_from_json(json::parse(slurp(tmp.path / "config.json"))["data"]["synth"]));
  CHECK(table.rows() == 20);
}

TEST_CASE("fetch command through a local registry") {
  TempDir tmp("fetch");
  const auto remote = tmp.path / "remote";
  fs::create_directories(remote);
  {
    std::ofstream f(remote / "t.csv");
    f << "a,b,y\n";
    for (int i = 0; i < 10; ++i) f << "k" << i % 3 << ',' << i << ',' << i * 0.5 << '\n';
  }
  data::DatasetMeta m;
  m.name = "tiny";
  m.abbreviation = "TI";
  m.categorical = {"a"};
  m.numerical = {"b"};
  m.target = "y";
  m.expected = {1, 1, 6, 2, 2, std::nullopt};
  m.sources = {{"t.csv", "file://" + (remote / "t.csv").string(), std::nullopt, 0, {}}};
  const auto registry = tmp.path / "registry.json";
  std::ofstream(registry) << json{{"datasets", {data::to_json(m)}}}.dump(2);
  ::setenv("TABSEQ_REGISTRY", registry.c_str(), 1);

  const auto cache = tmp.path / "cache";
  auto r = tabseq_run({"fetch", "tiny", "--cache-dir", cache.string(), "--output-dir", (tmp.path / "o1").string()});
  CHECK_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("downloaded") != std::string::npos);
  CHECK(r.out.find("TI validated") != std::string::npos);
  r = tabseq_run({"fetch", "TI", "--cache-dir", cache.string(), "--output-dir", (tmp.path / "o2").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("cached") != std::string::npos);

  r = tabseq_run({"fetch", "abalone", "--output-dir", (tmp.path / "o3").string()});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("known: TI") != std::string::npos);

  {
    std::ofstream f(cache / "t.csv", std::ios::app);
    f << "k0,99,1\n";
  }
  r = tabseq_run({"fetch", "tiny", "--cache-dir", cache.string(), "--output-dir", (tmp.path / "o4").string()});
  CHECK(r.code == cli::kExitIo);
  CHECK(r.err.find("integrity") != std::string::npos);

  r = tabseq_run({"train", "--seed", "1", "--dataset", "TI", "--families", "MLP", "--set", "models.0.width=8",
                  "--epochs", "1", "--folds", "2", "--cache-dir", (tmp.path / "empty").string(), "--output-dir",
                  (tmp.path / "o5").string()});
  CHECK(r.code == cli::kExitIo);
  ::unsetenv("TABSEQ_REGISTRY");
}
