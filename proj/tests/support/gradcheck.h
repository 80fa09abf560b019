#pragma once

// Central finite-difference oracle for tape gradients. Independent of the
// backward rules: it only evaluates the forward function.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tabseq/tape.h"
#include "tabseq/tensor.h"

namespace tabseq::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
};

// Relative error with a 1e-3 floor on the magnitude so that gradients which
// are exactly zero do not divide by rounding noise.
inline double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

inline GradCheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                 double h = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tape tape(8);
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }
  GradCheckResult result;
  TapeScope off(nullptr);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto v = inputs[k].mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double fp = f().item();
      v[i] = orig - h;
      const double fm = f().item();
      v[i] = orig;
      const double numeric = (fp - fm) / (2 * h);
      const double err = rel_error(analytic[k][i], numeric);
      if (err > result.max_rel_error) {
        result = {err, k, i};
      }
    }
  }
  return result;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Weighted sum with fixed pseudo-random weights, so every output element
// contributes a distinct sensitivity to the scalar under test.
inline Tensor probe(const Tensor& t, unsigned seed = 7);

}  // namespace tabseq::testing

#include "tabseq/ops.h"

namespace tabseq::testing {

inline Tensor probe(const Tensor& t, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(t.numel());
  for (auto& x : w) x = dist(rng);
  return sum_all(mul(t, Tensor(t.shape(), std::move(w))));
}

}  // namespace tabseq::testing
