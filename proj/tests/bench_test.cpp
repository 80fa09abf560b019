#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <unistd.h>

#include "doctest.h"
#include "tabseq/bench.h"
#include "tabseq/error.h"
#include "tabseq/tape.h"

using namespace tabseq;
using namespace tabseq::bench;
using models::Family;
namespace fs = std::filesystem;

namespace {

ProfileOptions accounting(PassKind pass = PassKind::kForward) {
  ProfileOptions o;
  o.pass = pass;
  o.repeats = 0;
  return o;
}

models::ModelSpec small_spec(Family f) {
  auto s = models::default_spec(f);
  s.d = 16;
  s.heads = 4;
  s.state = 4;
  s.rnn_hidden = 16;
  s.head_hidden = 16;
  s.ffn_hidden = 16;
  s.width = 32;
  s.layers = f == Family::kMambAttention ? 3 : 1;
  return s;
}

}  // namespace

TEST_CASE("attention scores charge N*H*J*J elements") {
  Tensor packed = Tensor::zeros({8, 512, 3 * 64}, true);
  Tape tape(kBytesPerElement);
  TapeScope scope(tape);
  nn::attention_scores(packed, 8);
  CHECK(tape.retained_bytes() == 67'108'864);
}

TEST_CASE("rnn hidden states charge N*J*d_h elements") {
  std::mt19937_64 rng(2);
  nn::RNNLayer layer(64, 64, nn::CellKind::kVanilla, nn::Activation::kTanh, rng);
  Tensor x = Tensor::zeros({32, 20, 64}, true);
  Tape tape(kBytesPerElement);
  TapeScope scope(tape);
  Tensor h = layer.forward(x);
  CHECK(h.numel() * kBytesPerElement == 163'840);
  // Projection, per-step states and the stacked sequence.
  CHECK(tape.regions().at("rnn").activations >= 163'840);
}

TEST_CASE("accounting is independent of repeats and runs") {
  auto spec = small_spec(Family::kMambular);
  ProfileOptions one;
  one.repeats = 1;
  one.warmups = 0;
  ProfileOptions five;
  five.repeats = 5;
  five.warmups = 1;
  auto a = profile(spec, 10, 16, one);
  auto b = profile(spec, 10, 16, five);
  CHECK(a.bytes_peak == b.bytes_peak);
  CHECK(a.bytes_retained == b.bytes_retained);
  CHECK(a.region_bytes == b.region_bytes);
  CHECK(a.time_ns_median > 0);
  CHECK(b.repeats == 5);
  CHECK(a.bytes_peak >= a.bytes_retained);
}

TEST_CASE("feature sweep") {
  auto recs = sweep_features(small_spec(Family::kTabulaRNN), {8, 16, 32, 64}, 16, accounting());
  REQUIRE(recs.size() == 4);
  for (std::size_t i = 1; i < recs.size(); ++i) CHECK(recs[i].bytes_peak >= recs[i - 1].bytes_peak);
  CHECK_THROWS_AS(sweep_features(small_spec(Family::kTabulaRNN), {}, 16, accounting()), ConfigError);
  CHECK_THROWS_AS(sweep_features(small_spec(Family::kTabulaRNN), {8, 4, 16, 32}, 16, accounting()), ConfigError);

  auto across = sweep_features(small_spec(Family::kMLP), {64, 96, 100, 128}, 16, accounting());
  CHECK(across[0].N == 32);
  CHECK(across[1].N == 32);
  CHECK(across[2].N == 8);
  CHECK(across[3].N == 8);
}

TEST_CASE("embedding sweep") {
  for (auto f : models::all_families()) {
    auto spec = small_spec(f);
    spec.heads = 8;
    auto recs = sweep_embedding(spec, {16, 32, 64, 128}, 12, accounting());
    REQUIRE(recs.size() == 4);
    for (std::size_t i = 1; i < recs.size(); ++i) {
      // Flat-input models have no embedding dimension.
      if (models::is_sequence_model(f)) CHECK(recs[i].bytes_peak > recs[i - 1].bytes_peak);
      else CHECK(recs[i].bytes_peak == recs[0].bytes_peak);
    }
    for (const auto& r : recs) CHECK(r.J == 12);
  }
  auto ft = small_spec(Family::kFTTransformer);
  ft.heads = 8;
  try {
    sweep_embedding(ft, {12, 16}, 12, accounting());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("d=12") != std::string::npos);
  }
}

TEST_CASE("scaling fits") {
  std::vector<double> J{64, 128, 256, 512}, quad, lin;
  for (double j : J) {
    quad.push_back(3.5 * j * j);
    lin.push_back(7 * j);
  }
  auto q = fit_scaling(J, quad);
  CHECK(q.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(q.r2 == doctest::Approx(1.0));
  CHECK(fit_scaling(J, lin).slope == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(fit_scaling(J, {1, 2, 0, 4}), NumericError);
  CHECK_THROWS_AS(fit_scaling({1, 2, 3}, {1, 2, 3}), ConfigError);
  auto noisy = fit_scaling(J, {1, 5, 2, 9});
  CHECK((noisy.r2 >= 0.0 && noisy.r2 <= 1.0));
}

TEST_CASE("budgeted bench specs") {
  const auto layout = simulated_layout(20);
  CHECK(layout.categorical_count() == 10);
  CHECK(layout.numerical_count() == 10);
  for (auto f : models::all_families()) {
    const auto n = static_cast<double>(models::count_params(budgeted_spec(f), layout));
    CHECK(std::abs(n - 350'000) <= 0.05 * 350'000);
  }
  CHECK(model_label(budgeted_spec(Family::kMambular, nn::ScanMode::kFused)) == "Mambular-fused");
  CHECK(model_label(budgeted_spec(Family::kMLP, nn::ScanMode::kFused)) == "MLP");
}

TEST_CASE("fused scan never costs more and crosses attention") {
  auto rec = small_spec(Family::kMambular);
  rec.d = 64;
  rec.state = 16;
  auto fused = rec;
  fused.scan = nn::ScanMode::kFused;
  auto attn = small_spec(Family::kFTTransformer);
  attn.d = 64;
  attn.heads = 8;
  attn.ffn_hidden = 64;
  const std::vector<std::size_t> grid{16, 32, 64, 128, 256};
  for (auto pass : {PassKind::kForward, PassKind::kForwardBackward}) {
    auto r = sweep_features(rec, grid, 64, accounting(pass));
    auto f = sweep_features(fused, grid, 64, accounting(pass));
    auto a = sweep_features(attn, grid, 64, accounting(pass));
    bool crossed = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      CHECK(f[i].bytes_peak <= r[i].bytes_peak);
      crossed = crossed || f[i].bytes_peak < a[i].bytes_peak;
    }
    CHECK(r[0].bytes_peak > a[0].bytes_peak);
    CHECK(crossed);
  }
}

TEST_CASE("rank vs efficiency") {
  std::vector<std::string> names;
  std::vector<double> ranks;
  std::vector<ProfileRecord> profs;
  double k = 1;
  for (auto f : models::all_families()) {
    names.emplace_back(models::to_string(f));
    ranks.push_back(k);
    ProfileRecord p;
    p.model = names.back();
    p.bytes_peak = static_cast<std::size_t>(1000 * k);
    p.time_ns_median = 10 * k;
    profs.push_back(p);
    k += 0.5;
  }
  auto rows = rank_vs_efficiency(names, ranks, profs);
  REQUIRE(rows.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(rows[i].average_rank == ranks[i]);
    CHECK(rows[i].bytes == profs[i].bytes_peak);
  }
  profs.pop_back();
  try {
    rank_vs_efficiency(names, ranks, profs);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("ResNet") != std::string::npos);
  }
}

TEST_CASE("report emission") {
  const auto dir = fs::temp_directory_path() / ("tabseq_bench_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  Report report;
  Sweep features{"features_forward", Axis::kFeatures, PassKind::kForward, {}};
  Sweep embedding{"embedding_forward", Axis::kEmbedding, PassKind::kForward, {}};
  for (auto f : {Family::kTabulaRNN, Family::kFTTransformer}) {
    auto spec = small_spec(f);
    auto a = sweep_features(spec, {8, 16, 32, 64}, 16, accounting());
    features.records.insert(features.records.end(), a.begin(), a.end());
    auto b = sweep_embedding(spec, {8, 16, 32, 64}, 12, accounting());
    embedding.records.insert(embedding.records.end(), b.begin(), b.end());
  }
  features.records[0].time_ns_median = 1234.5678901234567;
  report.sweeps = {features, embedding};
  for (const auto& s : report.sweeps) {
    auto fits = fit_sweep(s);
    report.fits.insert(report.fits.end(), fits.begin(), fits.end());
  }
  report.efficiency = {{"TabulaRNN", 2.75, 1000, 5.0}, {"FTTransformer", 2.25, 4000, 9.0}};
  auto files = emit_report(report, dir);
  CHECK(fs::exists(dir / "features_forward.csv"));
  CHECK(fs::exists(dir / "embedding_forward.csv"));
  CHECK(fs::exists(dir / "memory_vs_features_small.svg"));
  CHECK(fs::exists(dir / "memory_vs_embedding.svg"));
  CHECK(fs::exists(dir / "rank_vs_memory.svg"));
  CHECK(fs::exists(dir / "summary.json"));

  auto back = read_profile_csv(dir / "features_forward.csv");
  REQUIRE(back.size() == features.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& a = back[i];
    const auto& b = features.records[i];
    CHECK(a.model == b.model);
    CHECK(a.J == b.J);
    CHECK(a.d == b.d);
    CHECK(a.N == b.N);
    CHECK(a.pass == b.pass);
    CHECK(a.bytes_peak == b.bytes_peak);
    CHECK(a.bytes_retained == b.bytes_retained);
    CHECK(a.time_ns_median == b.time_ns_median);
    CHECK(a.repeats == b.repeats);
  }

  std::ifstream in(dir / "summary.json");
  auto summary = nlohmann::json::parse(in);
  CHECK(summary["schema_version"] == kReportSchemaVersion);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& f : summary["fits"]) {
    if (f["measure"] == "peak") seen.insert({f["sweep"].get<std::string>(), f["model"].get<std::string>()});
  }
  CHECK(seen.size() == 4);

  write_profile_csv(dir / "x.csv", {});
  CHECK(read_profile_csv(dir / "x.csv").empty());
  CHECK_THROWS_AS(emit_report(report, dir / "summary.json" / "nested"), IoError);
  fs::remove_all(dir);
}
