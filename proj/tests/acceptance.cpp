// Acceptance checks, one verdict line per criterion. Exit status is non-zero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "support/gradcheck.h"
#include "tabseq/bench.h"
#include "tabseq/blocks.h"
#include "tabseq/cli.h"
#include "tabseq/data.h"
#include "tabseq/encoding.h"
#include "tabseq/models.h"
#include "tabseq/ops.h"
#include "tabseq/training.h"

using namespace tabseq;
using nlohmann::json;
using testing::gradcheck;
using testing::probe;
using testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); }

std::vector<Tensor> tensors_of(const nn::ParameterList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

fs::path scratch_dir() {
  auto p = fs::temp_directory_path() / ("tabseq_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli_run(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "tabseq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

// 1. Finite-difference gradients of every block.
Verdict gradient_suite() {
  constexpr int kInstances = 20;
  constexpr double kTol = 1e-4;
  std::map<std::string, double> worst;
  auto note = [&](const std::string& block, double err) { worst[block] = std::max(worst[block], err); };

  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 rng(1000 + i);
    {
      encoding::FeatureLayout layout;
      for (std::size_t k = pick(rng, 0, 2); k-- > 0;) layout.category_rows.push_back(pick(rng, 2, 4));
      for (std::size_t k = pick(rng, layout.category_rows.empty() ? 1 : 0, 2); k-- > 0;) {
        layout.bin_counts.push_back(pick(rng, 1, 3));
      }
      nn::FeatureEmbedding emb(layout, pick(rng, 2, 4), rng);
      nn::Batch batch;
      batch.rows = pick(rng, 1, 3);
      for (std::size_t n = 0; n < batch.rows; ++n) {
        for (auto k : layout.category_rows) batch.codes.push_back(rng() % k);
      }
      batch.ple = random_tensor({batch.rows, layout.ple_width()}, rng, 0.0, 1.0);
      auto inputs = tensors_of(emb.parameters());
      inputs.push_back(batch.ple);
      note("embedding", gradcheck([&] { return probe(emb.forward(batch), i); }, inputs).max_rel_error);
    }
    {
      const auto kind = std::array{nn::CellKind::kVanilla, nn::CellKind::kGRU, nn::CellKind::kLSTM}[i % 3];
      const auto act = i % 2 ? nn::Activation::kTanh : nn::Activation::kRelu;
      nn::RNNLayer cell(pick(rng, 1, 3), pick(rng, 2, 4), kind, kind == nn::CellKind::kVanilla ? act
                                                                                               : nn::Activation::kTanh,
                        rng);
      Tensor x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 4), cell.w_x.dim(0)}, rng);
      auto inputs = tensors_of(cell.parameters());
      inputs.push_back(x);
      note("rnn", gradcheck([&] { return probe(cell.forward(x), i); }, inputs).max_rel_error);
    }
    {
      const std::size_t d = pick(rng, 2, 4);
      nn::SSMBlock block(d, pick(rng, 1, 3), i % 2 == 1, rng);
      Tensor x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 4), d}, rng);
      auto inputs = tensors_of(block.parameters());
      inputs.push_back(x);
      const auto mode = i % 2 ? nn::ScanMode::kFused : nn::ScanMode::kRecurrent;
      note("ssm", gradcheck([&] { return probe(block.forward(x, mode), i); }, inputs).max_rel_error);
    }
    {
      const std::size_t heads = pick(rng, 1, 2);
      const std::size_t d = heads * pick(rng, 1, 3);
      nn::AttentionBlock block(d, heads, pick(rng, 2, 5), rng);
      Tensor x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 4), d}, rng);
      auto inputs = tensors_of(block.parameters());
      inputs.push_back(x);
      note("attention", gradcheck([&] { return probe(block.forward(x), i); }, inputs).max_rel_error);
    }
    {
      const std::size_t in = pick(rng, 1, 5);
      Tensor x = random_tensor({pick(rng, 1, 3), in}, rng);
      std::vector<std::size_t> hidden;
      for (std::size_t k = pick(rng, 0, 2); k-- > 0;) hidden.push_back(pick(rng, 2, 5));
      nn::MLP mlp(in, hidden, pick(rng, 1, 2), rng);
      auto inputs = tensors_of(mlp.parameters());
      inputs.push_back(x);
      note("mlp", gradcheck([&] { return probe(mlp.forward(x), i); }, inputs).max_rel_error);

      nn::ResNet net(in, pick(rng, 2, 5), pick(rng, 2, 4), pick(rng, 1, 2), pick(rng, 1, 2), rng);
      inputs = tensors_of(net.parameters());
      inputs.push_back(x);
      note("resnet", gradcheck([&] { return probe(net.forward(x), i); }, inputs).max_rel_error);

      nn::TaskHead head(in, pick(rng, 2, 5), rng);
      inputs = tensors_of(head.parameters());
      inputs.push_back(x);
      note("head", gradcheck([&] { return probe(head.forward(x), i); }, inputs).max_rel_error);
    }
    {
      const std::size_t n = pick(rng, 1, 6);
      Tensor pred = random_tensor({n, 1}, rng, -3, 3);
      Tensor y = random_tensor({n, 1}, rng, -3, 3);
      note("mse loss", gradcheck([&] { return train::mse_loss(pred, y); }, {pred, y}).max_rel_error);
      std::vector<double> labels(n);
      for (auto& l : labels) l = static_cast<double>(rng() % 2);
      Tensor t({n, 1}, labels);
      note("bce loss", gradcheck([&] { return train::bce_with_logits(pred, t); }, {pred}).max_rel_error);
    }
  }
  Verdict v{true, std::to_string(kInstances) + " instances per block, max rel error:"};
  for (const auto& [block, err] : worst) {
    v.pass = v.pass && err < kTol;
    v.detail += " " + block + " " + fmt("%.1e", err);
  }
  v.detail += " (limit 1e-4)";
  return v;
}

// 2. Scan outputs against a loop-free oracle that materializes every
// broadcast product before the recurrence.
Verdict ssm_oracle() {
  double worst = 0.0;
  std::size_t cases = 0;
  for (int i = 0; i < 200; ++i) {
    std::mt19937_64 rng(2000 + i);
    const std::size_t N = pick(rng, 1, 2), J = pick(rng, 1, 4), D = pick(rng, 1, 3), S = pick(rng, 1, 3);
    const bool wide = i % 2 == 1;
    const bool zero_delta = i % 10 == 0;
    Tensor x = random_tensor({N, J, D}, rng, -1, 1, false);
    Tensor delta = random_tensor({N, J, wide ? D : 1}, rng, 0.01, 1.5, false);
    if (zero_delta) {
      for (auto& v : delta.mutable_values()) v = 0.0;
    }
    Tensor a = random_tensor({D, S}, rng, -3.0, -0.05, false);
    Tensor b = random_tensor({N, J, S}, rng, -1, 1, false);
    Tensor c = random_tensor({N, J, S}, rng, -1, 1, false);
    Tensor skip = random_tensor({D}, rng, -1, 1, false);

    const std::size_t W = delta.dim(2);
    std::vector<double> dA(N * J * D * S), dBx(N * J * D * S), C(N * J * D * S), h(N * J * D * S);
    auto at = [&](std::size_t n, std::size_t j, std::size_t k, std::size_t s) { return ((n * J + j) * D + k) * S + s; };
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < D; ++k)
          for (std::size_t s = 0; s < S; ++s) {
            const double dt = delta.values()[(n * J + j) * W + (W == 1 ? 0 : k)];
            dA[at(n, j, k, s)] = std::exp(dt * a.values()[k * S + s]);
            dBx[at(n, j, k, s)] = dt * b.values()[(n * J + j) * S + s] * x.values()[(n * J + j) * D + k];
            C[at(n, j, k, s)] = c.values()[(n * J + j) * S + s];
          }
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < D; ++k)
          for (std::size_t s = 0; s < S; ++s) {
            h[at(n, j, k, s)] = dA[at(n, j, k, s)] * (j == 0 ? 0.0 : h[at(n, j - 1, k, s)]) + dBx[at(n, j, k, s)];
          }
    std::vector<double> y(N * J * D);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < D; ++k) {
          double acc = skip.values()[k] * x.values()[(n * J + j) * D + k];
          for (std::size_t s = 0; s < S; ++s) acc += h[at(n, j, k, s)] * C[at(n, j, k, s)];
          y[(n * J + j) * D + k] = acc;
        }

    for (int m = 0; m < 2; ++m) {
      std::vector<Tensor> states;
      Tensor out = m == 0 ? nn::recurrent_scan(x, delta, a, b, c, skip, &states)
                          : nn::selective_scan(x, delta, a, b, c, skip, &states);
      for (std::size_t e = 0; e < y.size(); ++e) worst = std::max(worst, std::abs(out.values()[e] - y[e]));
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t k = 0; k < D; ++k)
            for (std::size_t s = 0; s < S; ++s) {
              worst = std::max(worst, std::abs(states[j].values()[(n * D + k) * S + s] - h[at(n, j, k, s)]));
            }
      if (zero_delta) {
        for (std::size_t e = 0; e < y.size(); ++e) {
          const double identity = skip.values()[e % D] * x.values()[e];
          worst = std::max(worst, std::abs(out.values()[e] - identity));
        }
      }
      ++cases;
    }
  }
  return {worst <= 1e-12, std::to_string(cases) + " scans (recurrent and fused, incl. zero-delta identity), max abs error " +
                              fmt("%.1e", worst) + " (limit 1e-12)"};
}

// 3. Piecewise linear encoding properties.
Verdict ple_properties() {
  std::mt19937_64 rng(3000);
  std::size_t violations = 0;
  std::string first;
  auto fail = [&](const std::string& what) {
    if (violations++ == 0) first = what;
  };
  for (int i = 0; i < 1000; ++i) {
    const std::size_t T = pick(rng, 1, 12);
    std::uniform_real_distribution<double> u(-5, 5), gap(0.01, 2.0);
    encoding::PLEBins bins;
    bins.edges.push_back(u(rng));
    for (std::size_t t = 0; t < T; ++t) bins.edges.push_back(bins.edges.back() + gap(rng));
    const double lo = bins.edges.front(), hi = bins.edges.back();
    std::uniform_real_distribution<double> xs(lo - 1.0, hi + 1.0);
    double x1 = xs(rng), x2 = xs(rng);
    if (x1 > x2) std::swap(x1, x2);
    const auto e1 = encoding::encode_ple(x1, bins), e2 = encoding::encode_ple(x2, bins);
    for (std::size_t t = 0; t < T; ++t) {
      if (e1[t] > e2[t]) fail("monotonicity at instance " + std::to_string(i));
      if (e1[t] < 0.0 || e1[t] > 1.0 || e2[t] < 0.0 || e2[t] > 1.0) fail("range at instance " + std::to_string(i));
      if (t > 0 && e1[t] > e1[t - 1]) fail("component order at instance " + std::to_string(i));
    }
    for (std::size_t k = 0; k <= T; ++k) {
      const auto e = encoding::encode_ple(bins.edges[k], bins);
      for (std::size_t t = 0; t < T; ++t) {
        if (e[t] != (t < k ? 1.0 : 0.0)) fail("edge " + std::to_string(k) + " at instance " + std::to_string(i));
      }
    }
    const auto below = encoding::encode_ple(lo - std::abs(u(rng)) - 1e-9, bins);
    const auto above = encoding::encode_ple(hi + std::abs(u(rng)) + 1e-9, bins);
    for (std::size_t t = 0; t < T; ++t) {
      if (below[t] != 0.0) fail("below b_0 at instance " + std::to_string(i));
      if (above[t] != 1.0) fail("above b_T at instance " + std::to_string(i));
    }
  }
  return {violations == 0, "1000 instances, " + std::to_string(violations) + " violations" +
                               (first.empty() ? "" : " (first: " + first + ")")};
}

// 4. Rank AUC against the O(n^2) pairwise count.
Verdict auc_oracle() {
  std::mt19937_64 rng(4000);
  std::size_t mismatches = 0, with_ties = 0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = pick(rng, 2, 200);
    const bool coarse = i % 3 == 0;
    std::vector<double> s(n), y(n);
    std::normal_distribution<double> g(0, 1);
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = coarse ? static_cast<double>(rng() % 5) : g(rng);
      y[k] = static_cast<double>(rng() % 2);
    }
    y[0] = 0.0;
    y[1] = 1.0;
    double wins = 0.0, pairs = 0.0;
    bool tied = false;
    for (std::size_t p = 0; p < n; ++p) {
      if (y[p] != 1.0) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (y[q] != 0.0) continue;
        pairs += 1.0;
        if (s[p] > s[q]) wins += 1.0;
        if (s[p] == s[q]) {
          wins += 0.5;
          tied = true;
        }
      }
    }
    with_ties += tied;
    if (train::metric_auc(s, y) != wins / pairs) ++mismatches;
  }
  return {mismatches == 0, "500 instances (" + std::to_string(with_ties) + " with tied scores), " +
                               std::to_string(mismatches) + " inexact"};
}

// 5. Budgeted parameter counts by summing the archive manifest.
Verdict parameter_budget() {
  const auto layout = bench::simulated_layout(20);
  bool pass = true;
  std::string detail;
  for (auto f : models::all_families()) {
    const auto spec = bench::budgeted_spec(f);
    std::mt19937_64 rng(5000);
    const auto model = models::build(spec, layout, rng);
    const auto doc = models::manifest(model);
    std::size_t total = 0;
    for (const auto& t : doc.at("tensors")) {
      std::size_t count = 1;
      for (const auto& dim : t.at("shape")) count *= dim.get<std::size_t>();
      total += count;
    }
    const double dev = (static_cast<double>(total) - 350'000.0) / 350'000.0;
    pass = pass && std::abs(dev) <= 0.05 && total == models::count_params(spec, layout);
    detail += std::string(detail.empty() ? "" : ", ") + std::string(models::to_string(f)) + " " +
              std::to_string(total) + " (" + fmt("%+.2f%%", 100 * dev) + ")";
  }
  return {pass, detail + " (target 350000 +- 5%)"};
}

struct SweepData {
  std::vector<bench::ProfileRecord> forward, backward;
  std::vector<std::string> labels;
};

SweepData scaling_sweeps(const std::vector<std::size_t>& grid) {
  SweepData out;
  bench::ProfileOptions options;
  options.repeats = 7;
  options.warmups = 3;
  for (auto f : models::all_families()) {
    for (auto scan : {nn::ScanMode::kRecurrent, nn::ScanMode::kFused}) {
      const auto spec = bench::budgeted_spec(f, scan, 64);
      const auto label = bench::model_label(spec);
      if (std::find(out.labels.begin(), out.labels.end(), label) != out.labels.end()) continue;
      out.labels.push_back(label);
      options.pass = bench::PassKind::kForward;
      auto fwd = bench::sweep_features(spec, grid, 64, options);
      options.pass = bench::PassKind::kForwardBackward;
      auto bwd = bench::sweep_features(spec, grid, 64, options);
      out.forward.insert(out.forward.end(), fwd.begin(), fwd.end());
      out.backward.insert(out.backward.end(), bwd.begin(), bwd.end());
    }
  }
  return out;
}

std::vector<bench::ProfileRecord> of_model(const std::vector<bench::ProfileRecord>& recs, const std::string& model) {
  std::vector<bench::ProfileRecord> out;
  for (const auto& r : recs) {
    if (r.model == model) out.push_back(r);
  }
  return out;
}

// 6. Exponent separation and timing sanity.
Verdict scaling_exponents(const SweepData& data) {
  bool pass = true;
  std::string detail;
  auto add = [&](const std::string& name, double slope, bool ok, const char* bound) {
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : ", ") + name + " " + fmt("%.3f", slope) + bound;
  };
  for (const auto& label : data.labels) {
    const auto recs = of_model(data.forward, label);
    const double total = bench::fit_scaling(recs, bench::Axis::kFeatures).slope;
    if (label == "FTTransformer") {
      add(label, total, total >= 1.8, ">=1.8");
      const double attn = bench::fit_scaling(recs, bench::Axis::kFeatures, "attention").slope;
      add(label + " attention", attn, attn >= 1.8, ">=1.8");
    } else if (label.starts_with("MambAttention")) {
      const double attn = bench::fit_scaling(recs, bench::Axis::kFeatures, "attention").slope;
      add(label + " attention", attn, attn >= 1.8, ">=1.8");
    } else {
      add(label, total, total <= 1.2, "<=1.2");
    }
  }
  std::size_t timing_ok = 0, timing_total = 0;
  for (std::size_t i = 0; i < data.forward.size(); ++i) {
    ++timing_total;
    if (data.backward[i].time_ns_median >= data.forward[i].time_ns_median) ++timing_ok;
  }
  pass = pass && timing_ok == timing_total;
  detail += "; fwd+bwd time >= fwd time in " + std::to_string(timing_ok) + "/" + std::to_string(timing_total) +
            " configs";
  return {pass, detail};
}

// 7. Fused scan never accounts more than the recurrent scan.
Verdict fused_dominance(const SweepData& data) {
  std::size_t compared = 0, violations = 0;
  auto compare = [&](const std::vector<bench::ProfileRecord>& recs) {
    for (const auto& fused : recs) {
      if (!fused.model.ends_with("-fused")) continue;
      const auto base = fused.model.substr(0, fused.model.size() - 6);
      for (const auto& rec : recs) {
        if (rec.model == base && rec.J == fused.J && rec.d == fused.d && rec.pass == fused.pass) {
          ++compared;
          if (fused.bytes_peak > rec.bytes_peak || fused.bytes_retained > rec.bytes_retained) ++violations;
        }
      }
    }
  };
  compare(data.forward);
  compare(data.backward);
  bench::ProfileOptions accounting;
  accounting.repeats = 0;
  for (auto pass : {bench::PassKind::kForward, bench::PassKind::kForwardBackward}) {
    accounting.pass = pass;
    std::vector<bench::ProfileRecord> emb;
    for (auto f : {models::Family::kMambular, models::Family::kMambAttention}) {
      for (auto scan : {nn::ScanMode::kRecurrent, nn::ScanMode::kFused}) {
        auto recs = bench::sweep_embedding(bench::budgeted_spec(f, scan), {16, 32, 64, 128}, 12, accounting);
        emb.insert(emb.end(), recs.begin(), recs.end());
      }
    }
    compare(emb);
    std::vector<bench::ProfileRecord> small;
    for (auto f : {models::Family::kMambular, models::Family::kMambAttention}) {
      for (auto scan : {nn::ScanMode::kRecurrent, nn::ScanMode::kFused}) {
        auto recs = bench::sweep_features(bench::budgeted_spec(f, scan), {8, 16, 32, 64}, 64, accounting);
        small.insert(small.end(), recs.begin(), recs.end());
      }
    }
    compare(small);
  }
  return {violations == 0 && compared > 0,
          std::to_string(compared) + " fused/recurrent pairs, " + std::to_string(violations) + " violations"};
}

// 8. Published average ranks from the published metric table.
Verdict rank_reproduction() {
  const auto table = train::reference_results();
  const auto published = train::reference_average_ranks();
  std::string detail;
  std::vector<std::string> matching;
  for (auto policy : {train::TiePolicy::kMean, train::TiePolicy::kMin}) {
    const auto ranks = train::average_rank(table, policy);
    double worst = 0.0;
    for (std::size_t m = 0; m < ranks.size(); ++m) worst = std::max(worst, std::abs(ranks[m] - published[m]));
    if (worst <= 0.25 + 1e-9) matching.emplace_back(train::to_string(policy));
    detail += std::string(detail.empty() ? "" : ", ") + std::string(train::to_string(policy)) +
              " ties max deviation " + fmt("%.3f", worst);
  }
  std::string policies;
  for (const auto& p : matching) policies += (policies.empty() ? "" : "+") + p;
  return {!matching.empty(), detail + "; matching policy: " + (policies.empty() ? "none" : policies)};
}

struct TrainOutcome {
  std::map<std::string, double> ratio;  // mean test MSE over mean baseline MSE
  std::string error;
};

TrainOutcome cli_train(const fs::path& dir, const std::string& rule, const std::vector<std::string>& families,
                       std::size_t epochs, std::size_t patience) {
  std::string fam;
  for (const auto& f : families) fam += (fam.empty() ? "" : ",") + f;
  std::string err;
  const int code = cli_run({"train", "--seed", "20240601", "--synth", rule, "--rows", "5000", "--numerical", "5",
                            "--categorical", "5", "--families", fam, "--scan", "fused", "--folds", "5", "--epochs",
                            std::to_string(epochs), "--patience", std::to_string(patience), "--output-dir",
                            dir.string()},
                           &err);
  TrainOutcome out;
  if (code != 0) {
    out.error = err;
    return out;
  }
  const auto summary = json::parse(slurp(dir / "summary.json"));
  for (const auto& m : summary.at("models")) {
    out.ratio[m.at("model").get<std::string>()] =
        m.at("mean").get<double>() / m.at("baseline_mean").get<double>();
  }
  return out;
}

// 9. Desk-scale training on synthetic data.
Verdict training_sanity(const fs::path& scratch) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto signal =
      cli_train(scratch / "interaction", "interaction", {"TabulaRNN", "Mambular", "FTTransformer"}, 8, 2);
  if (!signal.error.empty()) return {false, "interaction run failed: " + signal.error};
  std::vector<std::string> all;
  for (auto f : models::all_families()) all.emplace_back(models::to_string(f));
  const auto noise = cli_train(scratch / "noise", "noise", all, 8, 2);
  if (!noise.error.empty()) return {false, "noise run failed: " + noise.error};

  bool pass = true;
  std::string detail = "interaction MSE/baseline:";
  for (const auto& [model, r] : signal.ratio) {
    pass = pass && r < 0.5;
    detail += " " + model + " " + fmt("%.3f", r);
  }
  detail += " (< 0.5); noise:";
  for (const auto& [model, r] : noise.ratio) {
    pass = pass && r >= 0.95;
    detail += " " + model + " " + fmt("%.3f", r);
  }
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  detail += " (>= 0.95); " + fmt("%.1f", minutes) + " min";
  return {pass && signal.ratio.size() == 3 && noise.ratio.size() == all.size(), detail};
}

// 10. Reruns from the emitted sidecars.
Verdict sidecar_reruns(const fs::path& scratch) {
  std::string err;
  const auto t1 = scratch / "train_a", t2 = scratch / "train_b";
  if (cli_run({"train", "--seed", "77", "--synth", "interaction", "--rows", "600", "--numerical", "3",
               "--categorical", "3", "--families", "TabulaRNN,Mambular,MLP", "--epochs", "2", "--output-dir",
               t1.string()},
              &err) != 0) {
    return {false, "train failed: " + err};
  }
  if (cli_run({"train", "--config", (t1 / "config.json").string(), "--output-dir", t2.string()}, &err) != 0) {
    return {false, "train rerun failed: " + err};
  }
  const auto b1 = scratch / "bench_a", b2 = scratch / "bench_b";
  if (cli_run({"bench", "--seed", "77", "--repeats", "0", "--J", "8,16,32,64", "--output-dir", b1.string()}, &err) !=
      0) {
    return {false, "bench failed: " + err};
  }
  if (cli_run({"bench", "--config", (b1 / "config.json").string(), "--output-dir", b2.string()}, &err) != 0) {
    return {false, "bench rerun failed: " + err};
  }
  std::size_t identical = 0, compared = 0;
  auto same = [&](const fs::path& a, const fs::path& b) {
    ++compared;
    const auto x = slurp(a);
    if (!x.empty() && x == slurp(b)) ++identical;
  };
  same(t1 / "results.csv", t2 / "results.csv");
  for (const auto& entry : fs::directory_iterator(b1)) {
    if (entry.path().extension() == ".csv") same(entry.path(), b2 / entry.path().filename());
  }
  return {identical == compared && compared >= 5,
          std::to_string(identical) + "/" + std::to_string(compared) +
              " CSVs bit-identical (train results; accounting-only bench sweeps)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::string log_path;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--log" && i + 1 < argc) log_path = argv[++i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    }
  }
  auto wanted = [&](int k) { return only.empty() || only.count(k); };

  const auto scratch = scratch_dir();
  bool all_pass = true;
  std::ofstream log;
  if (!log_path.empty()) log.open(log_path);
  auto report = [&](int k, const char* name, const Verdict& v) {
    all_pass = all_pass && v.pass;
    std::ostringstream line;
    line << "criterion " << k << " " << (v.pass ? "PASS" : "FAIL") << " " << name << ": " << v.detail << "\n";
    std::cout << line.str() << std::flush;
    if (log) log << line.str() << std::flush;
  };
  auto guarded = [&](int k, const char* name, auto&& fn) {
    if (!wanted(k)) return;
    try {
      report(k, name, fn());
    } catch (const std::exception& e) {
      report(k, name, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, "gradient suite", gradient_suite);
  guarded(2, "ssm oracle equivalence", ssm_oracle);
  guarded(3, "ple properties", ple_properties);
  guarded(4, "auc oracle", auc_oracle);
  guarded(5, "parameter budgeting", parameter_budget);
  if (wanted(6) || wanted(7)) {
    SweepData sweeps;
    std::string failure;
    try {
      sweeps = scaling_sweeps({64, 128, 256, 512});
    } catch (const std::exception& e) {
      failure = e.what();
    }
    guarded(6, "scaling exponents", [&] {
      return failure.empty() ? scaling_exponents(sweeps) : Verdict{false, "sweep failed: " + failure};
    });
    guarded(7, "fused-scan dominance", [&] {
      return failure.empty() ? fused_dominance(sweeps) : Verdict{false, "sweep failed: " + failure};
    });
  }
  guarded(8, "rank reproduction", rank_reproduction);
  guarded(9, "synthetic training sanity", [&] { return training_sanity(scratch); });
  guarded(10, "sidecar reproducibility", [&] { return sidecar_reruns(scratch); });

  std::error_code ec;
  fs::remove_all(scratch, ec);
  return all_pass ? 0 : 1;
}
