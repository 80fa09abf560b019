#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "support/gradcheck.h"
#include "tabseq/error.h"
#include "tabseq/models.h"

using namespace tabseq;
using namespace tabseq::models;
using tabseq::testing::random_tensor;

namespace {

encoding::FeatureLayout layout_of(std::size_t cat, std::size_t num, std::size_t rows = 11, std::size_t bins = 64) {
  encoding::FeatureLayout layout;
  layout.category_rows.assign(cat, rows);
  layout.bin_counts.assign(num, bins);
  return layout;
}

nn::Batch random_batch(const encoding::FeatureLayout& layout, std::size_t rows, std::mt19937_64& rng) {
  nn::Batch batch;
  batch.rows = rows;
  for (std::size_t n = 0; n < rows; ++n) {
    for (auto k : layout.category_rows) batch.codes.push_back(rng() % k);
  }
  batch.ple = random_tensor({rows, layout.ple_width()}, rng, 0.0, 1.0, false);
  return batch;
}

nn::Batch row_of(const nn::Batch& batch, const encoding::FeatureLayout& layout, std::size_t r) {
  nn::Batch one;
  one.rows = 1;
  const std::size_t jc = layout.categorical_count();
  one.codes.assign(batch.codes.begin() + static_cast<std::ptrdiff_t>(r * jc),
                   batch.codes.begin() + static_cast<std::ptrdiff_t>((r + 1) * jc));
  const std::size_t w = layout.ple_width();
  std::vector<double> ple(batch.ple.values().begin() + static_cast<std::ptrdiff_t>(r * w),
                          batch.ple.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
  one.ple = Tensor({1, w}, std::move(ple));
  return one;
}

std::vector<ModelSpec> variants() {
  std::vector<ModelSpec> out;
  for (auto f : all_families()) out.push_back(default_spec(f));
  for (auto cell : {nn::CellKind::kGRU, nn::CellKind::kLSTM}) {
    auto s = default_spec(Family::kTabulaRNN);
    s.cell = cell;
    s.layers = 2;
    out.push_back(s);
  }
  auto s = default_spec(Family::kMambular);
  s.per_channel_delta = true;
  s.scan = nn::ScanMode::kFused;
  out.push_back(s);
  auto r = default_spec(Family::kResNet);
  r.bottleneck = 32;
  out.push_back(r);
  return out;
}

}  // namespace

TEST_CASE("MambAttention alternates with SSM blocks at both ends") {
  std::mt19937_64 rng(1);
  auto spec = default_spec(Family::kMambAttention);
  spec.d = 16;
  spec.heads = 4;
  CHECK(spec.layers == 5);
  Model m = build(spec, layout_of(2, 2, 4, 3), rng);
  using K = LayerKind;
  CHECK(m.pattern() == std::vector<K>{K::kSSM, K::kAttention, K::kSSM, K::kAttention, K::kSSM});
  auto doc = manifest(m);
  CHECK(doc["layers"] == nlohmann::json({"ssm", "attention", "ssm", "attention", "ssm"}));

  spec.layers = 4;
  CHECK_THROWS_AS(build(spec, layout_of(2, 2, 4, 3), rng), ConfigError);
  spec.layers = 1;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.layers = 3;
  spec.heads = 3;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("TabulaRNN smoke forward") {
  std::mt19937_64 rng(2);
  auto spec = default_spec(Family::kTabulaRNN);
  spec.layers = 1;
  spec.d = 8;
  spec.rnn_hidden = 6;
  auto layout = layout_of(1, 2, 4, 3);
  Model m = build(spec, layout, rng);
  Tensor y = predict(m, random_batch(layout, 2, rng));
  CHECK(y.shape() == Shape{2, 1});
  for (double v : y.values()) CHECK(std::isfinite(v));
}

TEST_CASE("parameter count examples") {
  std::mt19937_64 rng(3);
  nn::FeatureEmbedding cat(layout_of(1, 0), 64, rng);
  CHECK(cat.parameter_count() == 704);
  nn::FeatureEmbedding num(layout_of(0, 1), 64, rng);
  CHECK(num.parameter_count() == 4160);
  CHECK(count_params(Model{}) == 0);
}

TEST_CASE("closed-form parameter count matches built models") {
  const auto layout = layout_of(3, 2, 5, 7);
  for (auto spec : variants()) {
    CAPTURE(to_string(spec.family));
    spec.d = 16;
    spec.heads = 4;
    spec.head_hidden = 9;
    spec.width = 12;
    spec.rnn_hidden = 10;
    spec.state = 3;
    spec.ffn_hidden = 11;
    if (spec.bottleneck) spec.bottleneck = 5;
    std::mt19937_64 rng(4);
    Model m = build(spec, layout, rng);
    CHECK(count_params(m) == count_params(spec, layout));
  }
}

TEST_CASE("budget reaches 350k within 5% for every family") {
  const auto layout = layout_of(10, 10);
  ParamBudget b;
  std::size_t lo = SIZE_MAX, hi = 0;
  for (auto f : all_families()) {
    CAPTURE(to_string(f));
    ModelSpec spec = budget(default_spec(f), layout, b);
    const std::size_t count = count_params(spec, layout);
    CHECK(count >= 332'500);
    CHECK(count <= 367'500);
    CHECK(spec.d == 64);
    CHECK(spec.layers == default_spec(f).layers);
    lo = std::min(lo, count);
    hi = std::max(hi, count);
  }
  CHECK(static_cast<double>(hi) / static_cast<double>(lo) <= 1.11);
}

TEST_CASE("budget edge cases") {
  const auto layout = layout_of(2, 2, 4, 3);
  auto spec = default_spec(Family::kMLP);
  spec.width = 20;
  const std::size_t exact = count_params(spec, layout);
  ParamBudget b;
  b.target = exact;
  b.tolerance = 0.0;
  spec.width = 1;
  CHECK(budget(spec, layout, b).width == 20);

  b.target = 10;
  b.tolerance = 0.05;
  try {
    budget(default_spec(Family::kFTTransformer), layout, b);
    FAIL("expected BudgetError");
  } catch (const BudgetError& e) {
    CHECK(e.nearest() > 10);
  }

  b.search = {"d"};
  CHECK_THROWS_AS(budget(default_spec(Family::kFTTransformer), layout, b), ConfigError);
}

TEST_CASE("budget is deterministic") {
  const auto layout = layout_of(10, 10);
  ParamBudget b;
  b.search = {"head_hidden", "state"};
  b.max_value = 512;
  auto a = budget(default_spec(Family::kMambular), layout, b);
  auto c = budget(default_spec(Family::kMambular), layout, b);
  CHECK(a == c);
}

TEST_CASE("predict contracts") {
  const auto layout = layout_of(2, 3, 4, 5);
  for (auto spec : variants()) {
    CAPTURE(to_string(spec.family));
    spec.d = 16;
    spec.heads = 4;
    spec.head_hidden = 8;
    spec.width = 16;
    spec.rnn_hidden = 12;
    std::mt19937_64 rng(5);
    Model m = build(spec, layout, rng);
    nn::Batch batch = random_batch(layout, 8, rng);
    Tensor full = predict(m, batch);
    CHECK(full.shape() == Shape{8, 1});
    for (std::size_t r = 0; r < 8; ++r) {
      Tensor one = predict(m, row_of(batch, layout, r));
      CHECK(std::abs(one.item() - full.values()[r]) < 1e-6);
    }
    Tensor again = predict(m, batch);
    for (std::size_t r = 0; r < 8; ++r) CHECK(again.values()[r] == full.values()[r]);

    nn::Batch wrong = random_batch(layout_of(2, 2, 4, 5), 2, rng);
    CHECK_THROWS_AS(predict(m, wrong), ContractError);
  }
}

TEST_CASE("zeroed head outputs its bias") {
  std::mt19937_64 rng(6);
  const auto layout = layout_of(2, 2, 4, 3);
  auto spec = default_spec(Family::kMambular);
  spec.d = 8;
  Model m = build(spec, layout, rng);
  for (auto& v : m.head.output.weight.mutable_values()) v = 0.0;
  m.head.output.bias.mutable_values()[0] = 0.375;
  Tensor y = predict(m, random_batch(layout, 4, rng));
  for (double v : y.values()) CHECK(v == 0.375);
}

TEST_CASE("model archive round trip") {
  std::mt19937_64 rng(7);
  const auto layout = layout_of(2, 2, 4, 3);
  auto spec = default_spec(Family::kMambAttention, Task::kBinary);
  spec.d = 8;
  spec.heads = 2;
  Model m = build(spec, layout, rng);
  // Float32 storage: round the weights first so the reload is exact.
  for (auto& p : m.parameters()) {
    for (auto& v : p.tensor.mutable_values()) v = static_cast<float>(v);
  }
  const auto path = std::filesystem::temp_directory_path() / "tabseq_model_test.tsqa";
  save_model(path, m, nullptr, {{"seed", 7}});
  auto loaded = load_model(path);
  CHECK(loaded.model.spec() == spec);
  CHECK(loaded.manifest["parameter_count"] == count_params(m));
  CHECK(loaded.manifest["metadata"]["seed"] == 7);
  CHECK_FALSE(loaded.encoder.has_value());
  nn::Batch batch = random_batch(layout, 3, rng);
  Tensor a = predict(m, batch);
  Tensor b = predict(loaded.model, batch);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.values()[i] == b.values()[i]);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_model(path), IoError);
}

TEST_CASE("spec JSON round trip and validation") {
  for (const auto& spec : variants()) {
    CHECK(spec_from_json(to_json(spec)) == spec);
  }
  CHECK_THROWS_AS(spec_from_json({{"family", "Mambular"}, {"depth", 3}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"family", "Transformer"}}), ConfigError);
  auto s = spec_from_json({{"family", "MambAttention"}});
  CHECK(s.layers == 5);
}
