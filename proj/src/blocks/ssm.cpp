#include <cmath>

#include "tabseq/blocks.h"
#include "tabseq/error.h"
#include "tabseq/ops.h"
#include "tabseq/tape.h"

namespace tabseq::nn {

using detail::grad_target;

ScanMode parse_scan_mode(std::string_view name) {
  if (name == "recurrent") return ScanMode::kRecurrent;
  if (name == "fused") return ScanMode::kFused;
  throw ConfigError("unknown scan mode '" + std::string(name) + "'");
}

std::string_view to_string(ScanMode mode) { return mode == ScanMode::kFused ? "fused" : "recurrent"; }

namespace {

struct ScanDims {
  std::size_t n, j, d, s;
  bool per_channel;
};

ScanDims check_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                    const Tensor& skip) {
  if (x.rank() != 3 || a.rank() != 2) {
    throw DimensionError("scan expects x (N, J, d) and A (d, state), got " + to_string(x.shape()) + " and " +
                         to_string(a.shape()));
  }
  ScanDims dims{x.dim(0), x.dim(1), x.dim(2), a.dim(1), false};
  const Shape bc{dims.n, dims.j, dims.s};
  if (a.dim(0) != dims.d || b.shape() != bc || c.shape() != bc || skip.shape() != Shape{dims.d}) {
    throw DimensionError("scan operand shapes do not match x " + to_string(x.shape()) + " and A " +
                         to_string(a.shape()));
  }
  if (delta.shape() == Shape{dims.n, dims.j, 1}) {
    dims.per_channel = false;
  } else if (delta.shape() == Shape{dims.n, dims.j, dims.d}) {
    dims.per_channel = dims.d != 1;
  } else {
    throw DimensionError("delta must be (N, J, 1) or (N, J, d), got " + to_string(delta.shape()));
  }
  return dims;
}

[[noreturn]] void non_finite(std::size_t step) {
  throw NumericError("non-finite state decay exp(delta * A) at feature step " + std::to_string(step));
}

}  // namespace

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                      const Tensor& skip, std::vector<Tensor>* states) {
  const ScanDims dm = check_scan(x, delta, a, b, c, skip);
  const std::size_t N = dm.n, J = dm.j, D = dm.d, S = dm.s;
  const std::size_t dstride = dm.per_channel ? D : 1;
  auto xv = x.values();
  auto dv = delta.values();
  auto av = a.values();
  auto bv = b.values();
  auto cv = c.values();
  auto kv = skip.values();

  Tensor out({N, J, D});
  auto y = out.mutable_values();
  auto history = std::make_shared<std::vector<double>>(N * J * D * S);
  auto& hs = *history;
  const bool recording = detail::should_record({&x, &delta, &a, &b, &c, &skip});
  auto decays = std::make_shared<std::vector<double>>(recording ? hs.size() : 0);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t j = 0; j < J; ++j) {
      const std::size_t row = n * J + j;
      for (std::size_t k = 0; k < D; ++k) {
        const double dt = dv[row * dstride + (dm.per_channel ? k : 0)];
        const double xk = xv[row * D + k];
        double acc = kv[k] * xk;
        for (std::size_t s = 0; s < S; ++s) {
          const double decay = std::exp(dt * av[k * S + s]);
          if (!std::isfinite(decay)) non_finite(j);
          const double prev = j == 0 ? 0.0 : hs[((row - 1) * D + k) * S + s];
          const double h = decay * prev + dt * bv[row * S + s] * xk;
          hs[(row * D + k) * S + s] = h;
          if (recording) (*decays)[(row * D + k) * S + s] = decay;
          acc += h * cv[row * S + s];
        }
        y[row * D + k] = acc;
      }
    }
  }
  if (states) {
    states->clear();
    for (std::size_t j = 0; j < J; ++j) {
      Tensor h({N, D, S});
      auto hv = h.mutable_values();
      for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(hs.data() + (n * J + j) * D * S, D * S, hv.data() + n * D * S);
      }
      states->push_back(std::move(h));
    }
  }
  if (recording) {
    detail::record(
        out,
        [=](std::span<const double> g) {
          auto gx = grad_target(x);
          auto gd = grad_target(delta);
          auto ga = grad_target(a);
          auto gb = grad_target(b);
          auto gc = grad_target(c);
          auto gk = grad_target(skip);
          auto xv = x.values();
          auto dv = delta.values();
          auto av = a.values();
          auto bv = b.values();
          auto cv = c.values();
          auto kv = skip.values();
          const auto& hs = *history;
          const auto& ds = *decays;
          std::vector<double> carry(D * S);
          for (std::size_t n = 0; n < N; ++n) {
            std::fill(carry.begin(), carry.end(), 0.0);
            for (std::size_t jj = J; jj-- > 0;) {
              const std::size_t row = n * J + jj;
              for (std::size_t k = 0; k < D; ++k) {
                const std::size_t di = row * dstride + (dm.per_channel ? k : 0);
                const double dt = dv[di];
                const double xk = xv[row * D + k];
                const double gy = g[row * D + k];
                if (!gk.empty()) gk[k] += gy * xk;
                double gxk = gy * kv[k];
                double gdt = 0.0;
                for (std::size_t s = 0; s < S; ++s) {
                  const std::size_t hi = (row * D + k) * S + s;
                  double& gh = carry[k * S + s];
                  gh += gy * cv[row * S + s];
                  if (!gc.empty()) gc[row * S + s] += gy * hs[hi];
                  const double as = av[k * S + s];
                  const double decay = ds[hi];
                  const double prev = jj == 0 ? 0.0 : hs[hi - D * S];
                  const double bs = bv[row * S + s];
                  const double gdecay = gh * prev * decay;
                  gdt += gdecay * as + gh * bs * xk;
                  if (!ga.empty()) ga[k * S + s] += gdecay * dt;
                  if (!gb.empty()) gb[row * S + s] += gh * dt * xk;
                  gxk += gh * dt * bs;
                  gh *= decay;
                }
                if (!gd.empty()) gd[di] += gdt;
                if (!gx.empty()) gx[row * D + k] += gxk;
              }
            }
          }
        },
        /*charge=*/true, /*saved_elements=*/hs.size());
  }
  return out;
}

Tensor recurrent_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                      const Tensor& skip, std::vector<Tensor>* states) {
  const ScanDims dm = check_scan(x, delta, a, b, c, skip);
  const std::size_t N = dm.n, D = dm.d, S = dm.s;
  const std::size_t dw = delta.dim(2);
  if (states) states->clear();
  Tensor h = Tensor::zeros({N, D, S});
  std::vector<Tensor> ys;
  ys.reserve(dm.j);
  for (std::size_t j = 0; j < dm.j; ++j) {
    Tensor dt = reshape(select(delta, 1, j), {N, dw, 1});
    Tensor xj = select(x, 1, j);
    Tensor z = reshape(xj, {N, D, 1});
    Tensor bj = reshape(select(b, 1, j), {N, 1, S});
    Tensor cj = reshape(select(c, 1, j), {N, 1, S});
    Tensor decay = exp(broadcast_mul(dt, a));
    for (double v : decay.values()) {
      if (!std::isfinite(v)) non_finite(j);
    }
    Tensor input = broadcast_mul(broadcast_mul(dt, bj), z);
    h = add(broadcast_mul(decay, h), input);
    if (states) states->push_back(h.detach());
    ys.push_back(add(sum(broadcast_mul(h, cj), 2), broadcast_mul(skip, xj)));
  }
  return stack(ys, 1);
}

SSMBlock::SSMBlock(std::size_t d, std::size_t state, bool per_channel_delta, std::mt19937_64& rng)
    : d_(d), state_(state) {
  if (d == 0 || state == 0) throw ConfigError("ssm sizes must be positive");
  std::vector<double> logs(d * state);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t s = 0; s < state; ++s) logs[k * state + s] = std::log(static_cast<double>(s + 1));
  }
  a_log = Tensor({d, state}, std::move(logs), true);
  skip = Tensor::ones({d}, true);
  delta_proj = Linear(d, per_channel_delta ? d : 1, rng);
  {
    std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
    auto bias = delta_proj.bias.mutable_values();
    for (auto& v : bias) {
      const double dt = std::exp(u(rng));
      v = dt + std::log(-std::expm1(-dt));
    }
  }
  b_proj = Linear(d, state, rng);
  c_proj = Linear(d, state, rng);
  gate_proj = Linear(d, d, rng);
  out_proj = Linear(d, d, rng);
}

Tensor SSMBlock::realized_a() const { return neg(exp(a_log)); }

Tensor SSMBlock::forward(const Tensor& x, ScanMode mode, SSMTrace* trace) const {
  if (x.rank() != 3 || x.dim(2) != d_) {
    throw DimensionError("ssm expects (N, J, " + std::to_string(d_) + "), got " + to_string(x.shape()));
  }
  RegionScope region("ssm");
  Tensor delta = softplus(delta_proj.forward(x));
  Tensor b = b_proj.forward(x);
  Tensor c = c_proj.forward(x);
  Tensor a = realized_a();
  std::vector<Tensor>* states = trace ? &trace->states : nullptr;
  Tensor y = mode == ScanMode::kFused ? selective_scan(x, delta, a, b, c, skip, states)
                                      : recurrent_scan(x, delta, a, b, c, skip, states);
  if (trace) {
    trace->delta = delta.detach();
    trace->b = b.detach();
    trace->c = c.detach();
  }
  return out_proj.forward(mul(y, silu(gate_proj.forward(x))));
}

void SSMBlock::collect_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "a_log", a_log});
  out.push_back({prefix + "skip", skip});
  delta_proj.collect_parameters(prefix + "delta_proj.", out);
  b_proj.collect_parameters(prefix + "b_proj.", out);
  c_proj.collect_parameters(prefix + "c_proj.", out);
  gate_proj.collect_parameters(prefix + "gate_proj.", out);
  out_proj.collect_parameters(prefix + "out_proj.", out);
}

}  // namespace tabseq::nn
