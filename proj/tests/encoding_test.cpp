#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "tabseq/encoding.h"
#include "tabseq/error.h"

using namespace tabseq;
using namespace tabseq::encoding;

TEST_CASE("fit_bins quantile edges") {
  const std::vector<double> v{0.0, 0.25, 0.5, 0.75, 1.0};
  auto bins = fit_bins(v, 2);
  REQUIRE(bins.edges.size() == 3);
  CHECK(bins.edges[0] == 0.0);
  CHECK(bins.edges[1] == 0.5);
  CHECK(bins.edges[2] == 1.0);

  const std::vector<double> constant(10, 3.0);
  CHECK_THROWS_AS(fit_bins(constant, 4), DegenerateFeatureError);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> uni(5000);
  for (auto& x : uni) x = u(rng);
  auto b64 = fit_bins(uni, 64);
  CHECK(b64.edges.size() == 65);
  CHECK(b64.edges.front() == doctest::Approx(-1.0).epsilon(0.01));
  CHECK(b64.edges.back() == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::is_sorted(b64.edges.begin(), b64.edges.end()));
}

TEST_CASE("fit_bins merges duplicate quantiles") {
  // Heavy mass at 0: several quantile levels coincide.
  std::vector<double> v(90, 0.0);
  for (int i = 1; i <= 10; ++i) v.push_back(i);
  auto bins = fit_bins(v, 10);
  CHECK(bins.bin_count() < 10);
  CHECK(bins.bin_count() >= 1);
  for (std::size_t i = 1; i < bins.edges.size(); ++i) CHECK(bins.edges[i] > bins.edges[i - 1]);
}

TEST_CASE("encode_ple examples") {
  PLEBins bins{{0.0, 0.5, 1.0}};
  auto a = encode_ple(0.75, bins);
  CHECK(a == std::vector<double>{1.0, 0.5});
  CHECK(encode_ple(2.0, bins) == std::vector<double>{1.0, 1.0});
  CHECK(encode_ple(-0.2, bins) == std::vector<double>{0.0, 0.0});
  CHECK(encode_ple(0.5, bins) == std::vector<double>{1.0, 0.0});
}

TEST_CASE("rescale_numeric") {
  const double eps = NumericScaler::kEps;
  const std::vector<double> v{0, 5, 10};
  auto r = rescale_numeric(v);
  CHECK(r[0] == doctest::Approx(-1 + eps).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(0.0));
  CHECK(std::abs(r[1]) < 1e-15);
  CHECK(r[2] == doctest::Approx(1 - eps).epsilon(1e-15));

  const std::vector<double> sym{-0.5, -0.1, 0.0, 0.1, 0.5};
  CHECK(std::abs(rescale_numeric(sym)[2]) < 1e-15);

  const std::vector<double> single{4.0, 4.0};
  CHECK_THROWS_AS(rescale_numeric(single), DegenerateFeatureError);
}

TEST_CASE("encode_categorical") {
  const std::vector<std::string> raw{"a", "b", "a"};
  auto enc = encode_categorical(raw);
  CHECK(enc.codes == std::vector<std::size_t>{0, 1, 0});
  CHECK(enc.map.known_count() == 2);
  CHECK(enc.map.code("c") == 2);
  CHECK(enc.map.unknown_code() == 2);

  auto empty = encode_categorical(std::span<const std::string>{});
  CHECK(empty.map.known_count() == 0);
  CHECK(empty.codes.empty());

  // Idempotent: re-encoding training categories reproduces the codes.
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(enc.map.code(raw[i]) == enc.codes[i]);
}

TEST_CASE("standardize_target") {
  const std::vector<double> y{1, 3};
  auto s = standardize_target(y);
  CHECK(s.z == std::vector<double>{-1, 1});
  CHECK(s.scaler.mean == 2.0);
  CHECK(s.scaler.std == 1.0);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  std::vector<double> g(20000);
  for (auto& v : g) v = n01(rng);
  auto sg = standardize_target(g);
  CHECK(std::abs(sg.scaler.mean) < 0.05);
  CHECK(std::abs(sg.scaler.std - 1.0) < 0.05);
  double m = 0, ss = 0;
  for (double v : sg.z) m += v;
  m /= static_cast<double>(sg.z.size());
  for (double v : sg.z) ss += (v - m) * (v - m);
  CHECK(std::abs(m) < 1e-9);
  CHECK(std::abs(std::sqrt(ss / static_cast<double>(sg.z.size())) - 1.0) < 1e-9);

  const std::vector<double> c{2, 2, 2};
  CHECK_THROWS_AS(standardize_target(c), DegenerateTargetError);
}

namespace {

TabularColumns toy_columns(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-5, 5);
  TabularColumns c;
  c.categorical_names = {"color"};
  c.numerical_names = {"x0", "x1"};
  c.categorical.resize(1);
  c.numerical.resize(2);
  const char* colors[] = {"red", "green", "blue"};
  for (std::size_t i = 0; i < n; ++i) {
    c.categorical[0].push_back(colors[i % 3]);
    c.numerical[0].push_back(u(rng));
    c.numerical[1].push_back(u(rng) * 3);
    c.target.push_back(u(rng));
  }
  return c;
}

}  // namespace

TEST_CASE("fit/transform separation: fitted statistics ignore held-out rows") {
  auto all = toy_columns(200, 1);
  std::vector<std::size_t> train(120), held(80);
  std::iota(train.begin(), train.end(), 0);
  std::iota(held.begin(), held.end(), 120);
  auto enc_a = fit_encoder(all.subset(train), Task::kRegression, 8);

  // Corrupt the held-out portion arbitrarily and refit on the training rows.
  auto other = all;
  for (auto r : held) {
    other.numerical[0][r] = 1e6;
    other.categorical[0][r] = "purple";
    other.target[r] = -1e6;
  }
  auto enc_b = fit_encoder(other.subset(train), Task::kRegression, 8);
  CHECK(enc_a.to_json() == enc_b.to_json());

  auto encoded = enc_a.transform(other.subset(held));
  CHECK(encoded.codes[0] == enc_a.categories[0].unknown_code());
  // Out-of-range values saturate to all ones.
  for (std::size_t t = 0; t < enc_a.bins[0].bin_count(); ++t) CHECK(encoded.ple[t] == 1.0);
}

TEST_CASE("encoder JSON round-trip is lossless") {
  auto cols = toy_columns(100, 2);
  auto enc = fit_encoder(cols, Task::kRegression, 16);
  auto restored = DatasetEncoder::from_json(nlohmann::json::parse(enc.to_json().dump()));
  auto a = enc.transform(cols);
  auto b = restored.transform(cols);
  CHECK(a.codes == b.codes);
  CHECK(a.ple == b.ple);
  CHECK(a.target == b.target);
  CHECK(enc.layout() == restored.layout());

  auto doc = enc.to_json();
  doc["schema_version"] = 99;
  CHECK_THROWS_AS(DatasetEncoder::from_json(doc), DataError);
}

TEST_CASE("layout counts") {
  auto cols = toy_columns(300, 3);
  auto enc = fit_encoder(cols, Task::kRegression, 64);
  auto l = enc.layout();
  CHECK(l.categorical_count() == 1);
  CHECK(l.category_rows[0] == 4);
  CHECK(l.numerical_count() == 2);
  CHECK(l.bin_counts[0] == 64);
  CHECK(l.feature_count() == 3);
}
