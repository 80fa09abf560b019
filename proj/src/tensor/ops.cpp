#include "tabseq/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "broadcast.h"
#include "tabseq/error.h"
#include "tabseq/tape.h"

namespace tabseq {

namespace detail {

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  BroadcastPlan plan;
  plan.out.assign(rank, 1);
  plan.a_stride.assign(rank, 0);
  plan.b_stride.assign(rank, 0);
  std::size_t sa = 1;
  std::size_t sb = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t ax = rank - 1 - k;
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("shapes " + to_string(a) + " and " + to_string(b) + " are not broadcastable");
    }
    plan.out[ax] = da == 1 ? db : da;
    plan.a_stride[ax] = da == 1 ? 0 : sa;
    plan.b_stride[ax] = db == 1 ? 0 : sb;
    sa *= da;
    sb *= db;
  }
  return plan;
}

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " + to_string(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace detail

using detail::for_each_broadcast;
using detail::grad_target;
using detail::plan_broadcast;
using detail::should_record;
using detail::split_axis;

Shape broadcast_shapes(const Shape& a, const Shape& b) { return plan_broadcast(a, b).out; }

// ---------------------------------------------------------------- shape ops

Tensor reshape(const Tensor& t, Shape shape) {
  Tensor out = alias_with_shape(t, std::move(shape));
  if (should_record({&t})) {
    detail::record(
        out,
        [t](std::span<const double> g) {
          auto gt = grad_target(t);
          for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
        },
        /*charge=*/false);
  }
  return out;
}

Tensor select(const Tensor& t, std::size_t axis, std::size_t index) {
  const auto split = split_axis(t.shape(), axis);
  if (index >= split.len) {
    throw IndexError("select index " + std::to_string(index) + " out of range for axis " +
                     std::to_string(axis) + " of " + to_string(t.shape()));
  }
  Shape shape = t.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(shape);
  auto x = t.values();
  auto y = out.mutable_values();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((o * split.len + index) * split.inner), split.inner,
                y.begin() + static_cast<std::ptrdiff_t>(o * split.inner));
  }
  if (should_record({&t})) {
    detail::record(
        out,
        [t, split, index](std::span<const double> g) {
          auto gt = grad_target(t);
          for (std::size_t o = 0; o < split.outer; ++o) {
            const std::size_t base = (o * split.len + index) * split.inner;
            for (std::size_t i = 0; i < split.inner; ++i) gt[base + i] += g[o * split.inner + i];
          }
        },
        /*charge=*/false);
  }
  return out;
}

Tensor narrow(const Tensor& t, std::size_t axis, std::size_t start, std::size_t length) {
  const auto split = split_axis(t.shape(), axis);
  if (start + length > split.len) {
    throw IndexError("narrow [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range for axis " + std::to_string(axis) + " of " + to_string(t.shape()));
  }
  Shape shape = t.shape();
  shape[axis] = length;
  Tensor out(shape);
  auto x = t.values();
  auto y = out.mutable_values();
  const std::size_t chunk = length * split.inner;
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((o * split.len + start) * split.inner), chunk,
                y.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  if (should_record({&t})) {
    detail::record(
        out,
        [t, split, start, chunk](std::span<const double> g) {
          auto gt = grad_target(t);
          for (std::size_t o = 0; o < split.outer; ++o) {
            const std::size_t base = (o * split.len + start) * split.inner;
            for (std::size_t i = 0; i < chunk; ++i) gt[base + i] += g[o * chunk + i];
          }
        },
        /*charge=*/false);
  }
  return out;
}

Tensor stack(std::span<const Tensor> ts, std::size_t axis) {
  if (ts.empty()) throw DimensionError("stack of zero tensors");
  const Shape& base = ts[0].shape();
  if (axis > base.size()) throw DimensionError("stack axis out of range for " + to_string(base));
  for (const auto& t : ts) {
    if (t.shape() != base) {
      throw DimensionError("stack shape mismatch: " + to_string(base) + " vs " + to_string(t.shape()));
    }
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= base[i];
  const std::size_t inner = numel(base) / std::max<std::size_t>(outer, 1);
  const std::size_t count = ts.size();
  Shape shape = base;
  shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
  Tensor out(shape);
  auto y = out.mutable_values();
  for (std::size_t k = 0; k < count; ++k) {
    auto x = ts[k].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * inner), inner,
                  y.begin() + static_cast<std::ptrdiff_t>((o * count + k) * inner));
    }
  }
  if (should_record(ts)) {
    std::vector<Tensor> inputs(ts.begin(), ts.end());
    detail::record(out, [inputs, outer, inner](std::span<const double> g) {
      const std::size_t count = inputs.size();
      for (std::size_t k = 0; k < count; ++k) {
        auto gt = grad_target(inputs[k]);
        if (gt.empty()) continue;
        for (std::size_t o = 0; o < outer; ++o) {
          const std::size_t src = (o * count + k) * inner;
          for (std::size_t i = 0; i < inner; ++i) gt[o * inner + i] += g[src + i];
        }
      }
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> ts, std::size_t axis) {
  if (ts.empty()) throw DimensionError("concat of zero tensors");
  Shape shape = ts[0].shape();
  if (axis >= shape.size()) throw DimensionError("concat axis out of range for " + to_string(shape));
  std::size_t total_len = 0;
  for (const auto& t : ts) {
    const auto& s = t.shape();
    bool ok = s.size() == shape.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == shape[i];
    if (!ok) throw DimensionError("concat shape mismatch: " + to_string(shape) + " vs " + to_string(s));
    total_len += s[axis];
  }
  const auto split0 = split_axis(shape, axis);
  shape[axis] = total_len;
  Tensor out(shape);
  auto y = out.mutable_values();
  const std::size_t row = total_len * split0.inner;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : ts) {
    offsets.push_back(off);
    const std::size_t chunk = t.shape()[axis] * split0.inner;
    auto x = t.values();
    for (std::size_t o = 0; o < split0.outer; ++o) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  y.begin() + static_cast<std::ptrdiff_t>(o * row + off));
    }
    off += chunk;
  }
  if (should_record(ts)) {
    std::vector<Tensor> inputs(ts.begin(), ts.end());
    const std::size_t outer = split0.outer;
    const std::size_t inner = split0.inner;
    detail::record(out, [inputs, offsets, outer, inner, row, axis](std::span<const double> g) {
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto gt = grad_target(inputs[k]);
        if (gt.empty()) continue;
        const std::size_t chunk = inputs[k].shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < chunk; ++i) gt[o * chunk + i] += g[o * row + offsets[k] + i];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- binary ops

namespace {

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
  auto plan = plan_broadcast(a.shape(), b.shape());
  Tensor out(plan.out);
  auto x = a.values();
  auto z = b.values();
  auto y = out.mutable_values();
  switch (kind) {
    case BinaryKind::kAdd:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = x[i] + z[j]; });
      break;
    case BinaryKind::kSub:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = x[i] - z[j]; });
      break;
    case BinaryKind::kMul:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = x[i] * z[j]; });
      break;
    case BinaryKind::kDiv:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = x[i] / z[j]; });
      break;
  }
  if (should_record({&a, &b})) {
    detail::record(out, [a, b, plan = std::move(plan), kind](std::span<const double> g) {
      auto ga = grad_target(a);
      auto gb = grad_target(b);
      auto x = a.values();
      auto z = b.values();
      const bool wa = !ga.empty();
      const bool wb = !gb.empty();
      switch (kind) {
        case BinaryKind::kAdd:
          for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
            if (wa) ga[i] += g[o];
            if (wb) gb[j] += g[o];
          });
          break;
        case BinaryKind::kSub:
          for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
            if (wa) ga[i] += g[o];
            if (wb) gb[j] -= g[o];
          });
          break;
        case BinaryKind::kMul:
          for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
            if (wa) ga[i] += g[o] * z[j];
            if (wb) gb[j] += g[o] * x[i];
          });
          break;
        case BinaryKind::kDiv:
          for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
            if (wa) ga[i] += g[o] / z[j];
            if (wb) gb[j] -= g[o] * x[i] / (z[j] * z[j]);
          });
          break;
      }
    });
  }
  return out;
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& t, Fwd fwd, Deriv deriv) {
  Tensor out(t.shape());
  auto x = t.values();
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (should_record({&t})) {
    // Capture an untracked alias of the output so the closure does not pin
    // its own node's tracked handle.
    detail::record(out, [t, y_alias = out.detach(), deriv](std::span<const double> g) {
      auto gt = grad_target(t);
      auto x = t.values();
      auto y = y_alias.values();
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i] * deriv(x[i], y[i]);
    });
  }
  return out;
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double stable_softplus(double v) {
  // log(1 + e^v) = max(v, 0) + log1p(e^{-|v|})
  return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kMul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kDiv); }

Tensor scale(const Tensor& t, double factor) {
  return unary(
      t, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor neg(const Tensor& t) {
  return unary(
      t, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& t) {
  return unary(
      t, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& t) {
  return unary(
      t, [](double v) { return std::log(v); }, [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& t) {
  return unary(
      t, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& t) {
  return unary(
      t, [](double v) { return v > 0 ? v : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& t) {
  return unary(t, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& t) {
  return unary(
      t, [](double v) { return v * stable_sigmoid(v); },
      [](double x, double) {
        const double s = stable_sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor softplus(const Tensor& t) {
  return unary(t, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Tensor square(const Tensor& t) {
  return unary(
      t, [](double v) { return v * v; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------- reductions

namespace {

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out = s;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

Tensor sum_like(const Tensor& t, std::size_t axis, double factor) {
  const auto sp = split_axis(t.shape(), axis);
  Tensor out(drop_axis(t.shape(), axis));
  auto x = t.values();
  auto y = out.mutable_values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t k = 0; k < sp.len; ++k) {
      const double* src = x.data() + (o * sp.len + k) * sp.inner;
      double* dst = y.data() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  if (factor != 1.0) {
    for (auto& v : y) v *= factor;
  }
  if (should_record({&t})) {
    detail::record(out, [t, sp, factor](std::span<const double> g) {
      auto gt = grad_target(t);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t k = 0; k < sp.len; ++k) {
          double* dst = gt.data() + (o * sp.len + k) * sp.inner;
          const double* src = g.data() + o * sp.inner;
          for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += factor * src[i];
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& t, std::size_t axis) { return sum_like(t, axis, 1.0); }

Tensor mean(const Tensor& t, std::size_t axis) {
  const auto len = split_axis(t.shape(), axis).len;
  if (len == 0) throw DimensionError("mean over empty axis of " + to_string(t.shape()));
  return sum_like(t, axis, 1.0 / static_cast<double>(len));
}

Tensor max(const Tensor& t, std::size_t axis) {
  const auto sp = split_axis(t.shape(), axis);
  if (sp.len == 0) throw DimensionError("max over empty axis of " + to_string(t.shape()));
  Tensor out(drop_axis(t.shape(), axis));
  auto x = t.values();
  auto y = out.mutable_values();
  std::vector<std::size_t> argmax(sp.outer * sp.inner, 0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      std::size_t best = 0;
      double v = x[o * sp.len * sp.inner + i];
      for (std::size_t k = 1; k < sp.len; ++k) {
        const double c = x[(o * sp.len + k) * sp.inner + i];
        if (c > v) {  // strict: ties keep the first index
          v = c;
          best = k;
        }
      }
      y[o * sp.inner + i] = v;
      argmax[o * sp.inner + i] = best;
    }
  }
  if (should_record({&t})) {
    detail::record(out, [t, sp, argmax = std::move(argmax)](std::span<const double> g) {
      auto gt = grad_target(t);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          gt[(o * sp.len + argmax[o * sp.inner + i]) * sp.inner + i] += g[o * sp.inner + i];
        }
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& t) {
  return sum(reshape(t, Shape{t.numel()}), 0);
}

Tensor mean_all(const Tensor& t) {
  return mean(reshape(t, Shape{t.numel()}), 0);
}

// ---------------------------------------------------------------- softmax

Tensor softmax(const Tensor& t, std::size_t axis) {
  const auto sp = split_axis(t.shape(), axis);
  Tensor out(t.shape());
  auto x = t.values();
  auto y = out.mutable_values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < sp.len; ++k) m = std::max(m, x[base + k * sp.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) {
        const double e = std::exp(x[base + k * sp.inner] - m);
        y[base + k * sp.inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (std::size_t k = 0; k < sp.len; ++k) y[base + k * sp.inner] *= inv;
    }
  }
  if (should_record({&t})) {
    detail::record(out, [t, y_alias = out.detach(), sp](std::span<const double> g) {
      auto gt = grad_target(t);
      auto y = y_alias.values();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = o * sp.len * sp.inner + i;
          double dot = 0.0;
          for (std::size_t k = 0; k < sp.len; ++k) dot += g[base + k * sp.inner] * y[base + k * sp.inner];
          for (std::size_t k = 0; k < sp.len; ++k) {
            const std::size_t idx = base + k * sp.inner;
            gt[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- layer norm

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm on a scalar");
  const std::size_t width = x.shape().back();
  if (gamma.shape() != Shape{width} || beta.shape() != Shape{width}) {
    throw DimensionError("layer_norm affine shape mismatch: input " + to_string(x.shape()) + ", gamma " +
                         to_string(gamma.shape()) + ", beta " + to_string(beta.shape()));
  }
  const std::size_t rows = width ? x.numel() / width : 0;
  Tensor out(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  auto y = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * width;
    double mu = 0.0;
    for (std::size_t i = 0; i < width; ++i) mu += src[i];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t i = 0; i < width; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(width);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t i = 0; i < width; ++i) {
      const double h = (src[i] - mu) * rs;
      xhat[r * width + i] = h;
      y[r * width + i] = h * gv[i] + bv[i];
    }
  }
  if (should_record({&x, &gamma, &beta})) {
    detail::record(out, [x, gamma, beta, width, rows, xhat = std::move(xhat),
                         rstd = std::move(rstd)](std::span<const double> g) {
      auto gx = grad_target(x);
      auto gg = grad_target(gamma);
      auto gb = grad_target(beta);
      auto gv = gamma.values();
      std::vector<double> dxhat(width);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data() + r * width;
        const double* hr = xhat.data() + r * width;
        double mean_d = 0.0;
        double mean_dh = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
          dxhat[i] = gr[i] * gv[i];
          mean_d += dxhat[i];
          mean_dh += dxhat[i] * hr[i];
          if (!gg.empty()) gg[i] += gr[i] * hr[i];
          if (!gb.empty()) gb[i] += gr[i];
        }
        if (gx.empty()) continue;
        mean_d /= static_cast<double>(width);
        mean_dh /= static_cast<double>(width);
        for (std::size_t i = 0; i < width; ++i) {
          gx[r * width + i] += rstd[r] * (dxhat[i] - mean_d - hr[i] * mean_dh);
        }
      }
    });
  }
  return out;
}

}  // namespace tabseq
