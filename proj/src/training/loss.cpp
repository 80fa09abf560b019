#include <cmath>

#include "tabseq/error.h"
#include "tabseq/ops.h"
#include "tabseq/tape.h"
#include "tabseq/training.h"

namespace tabseq::train {

using detail::grad_target;

namespace {

void check_pair(const Tensor& pred, const Tensor& target, const char* what) {
  if (pred.numel() != target.numel() || pred.numel() == 0) {
    throw DimensionError(std::string(what) + ": prediction " + to_string(pred.shape()) + " and target " +
                         to_string(target.shape()) + " do not match");
  }
  for (double v : pred.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite prediction");
  }
  for (double v : target.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite target");
  }
}

}  // namespace

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "mse");
  auto p = pred.values();
  auto y = target.values();
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - y[i]) * (p[i] - y[i]);
  Tensor out = Tensor::scalar(acc / n);
  if (detail::should_record({&pred, &target})) {
    detail::record(out, [pred, target, n](std::span<const double> g) {
      auto p = pred.values();
      auto y = target.values();
      auto gp = grad_target(pred);
      auto gy = grad_target(target);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = 2.0 * (p[i] - y[i]) / n * g[0];
        if (!gp.empty()) gp[i] += r;
        if (!gy.empty()) gy[i] -= r;
      }
    });
  }
  return out;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
  check_pair(logits, target, "bce");
  auto z = logits.values();
  auto y = target.values();
  const double n = static_cast<double>(z.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    acc += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  Tensor out = Tensor::scalar(acc / n);
  if (detail::should_record({&logits, &target})) {
    detail::record(out, [logits, target, n](std::span<const double> g) {
      auto z = logits.values();
      auto y = target.values();
      auto gz = grad_target(logits);
      auto gy = grad_target(target);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double s = z[i] >= 0 ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]) / (1.0 + std::exp(z[i]));
        if (!gz.empty()) gz[i] += (s - y[i]) / n * g[0];
        if (!gy.empty()) gy[i] -= z[i] / n * g[0];
      }
    });
  }
  return out;
}

Tensor loss(const Tensor& pred, const Tensor& target, Task task) {
  return task == Task::kRegression ? mse_loss(pred, target) : bce_with_logits(pred, target);
}

Adam::Adam(nn::ParameterList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].tensor;
    auto w = p.mutable_values();
    const bool has = p.has_grad();
    std::span<const double> g = has ? p.grad() : std::span<const double>();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      w[i] -= config_.lr * (update + config_.weight_decay * w[i]);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace tabseq::train
