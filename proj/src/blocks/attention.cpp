#include <Eigen/Core>
#include <cmath>

#include "tabseq/blocks.h"
#include "tabseq/error.h"
#include "tabseq/ops.h"
#include "tabseq/tape.h"

namespace tabseq::nn {

using detail::grad_target;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Stride = Eigen::OuterStride<>;
using ConstStrided = Eigen::Map<const RowMat, 0, Stride>;
using Strided = Eigen::Map<RowMat, 0, Stride>;
using ConstDense = Eigen::Map<const RowMat>;
using Dense = Eigen::Map<RowMat>;

struct HeadGeometry {
  std::size_t n, j, d, heads, dk;
};

HeadGeometry head_geometry(const Tensor& qkv, std::size_t heads) {
  if (qkv.rank() != 3 || qkv.dim(2) % 3 != 0) {
    throw DimensionError("packed qkv must be (N, J, 3d), got " + to_string(qkv.shape()));
  }
  const std::size_t d = qkv.dim(2) / 3;
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("head count " + std::to_string(heads) + " does not divide width " + std::to_string(d));
  }
  return {qkv.dim(0), qkv.dim(1), d, heads, d / heads};
}

auto idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

Tensor attention_scores(const Tensor& qkv, std::size_t heads) {
  const auto hg = head_geometry(qkv, heads);
  const std::size_t J = hg.j, dk = hg.dk, row = 3 * hg.d;
  Tensor out({hg.n, hg.heads, J, J});
  auto x = qkv.values();
  auto y = out.mutable_values();
  for (std::size_t n = 0; n < hg.n; ++n) {
    for (std::size_t h = 0; h < hg.heads; ++h) {
      const double* base = x.data() + n * J * row + h * dk;
      ConstStrided q(base, idx(J), idx(dk), Stride(idx(row)));
      ConstStrided k(base + hg.d, idx(J), idx(dk), Stride(idx(row)));
      Dense s(y.data() + (n * hg.heads + h) * J * J, idx(J), idx(J));
      s.noalias() = q * k.transpose();
    }
  }
  if (detail::should_record({&qkv})) {
    detail::record(out, [qkv, hg](std::span<const double> g) {
      auto gq = grad_target(qkv);
      auto x = qkv.values();
      const std::size_t J = hg.j, dk = hg.dk, row = 3 * hg.d;
      for (std::size_t n = 0; n < hg.n; ++n) {
        for (std::size_t h = 0; h < hg.heads; ++h) {
          const std::size_t off = n * J * row + h * dk;
          ConstStrided q(x.data() + off, idx(J), idx(dk), Stride(idx(row)));
          ConstStrided k(x.data() + off + hg.d, idx(J), idx(dk), Stride(idx(row)));
          ConstDense gs(g.data() + (n * hg.heads + h) * J * J, idx(J), idx(J));
          Strided dq(gq.data() + off, idx(J), idx(dk), Stride(idx(row)));
          Strided dk_(gq.data() + off + hg.d, idx(J), idx(dk), Stride(idx(row)));
          dq.noalias() += gs * k;
          dk_.noalias() += gs.transpose() * q;
        }
      }
    });
  }
  return out;
}

Tensor attention_mix(const Tensor& weights, const Tensor& qkv, std::size_t heads) {
  const auto hg = head_geometry(qkv, heads);
  const std::size_t J = hg.j, dk = hg.dk, row = 3 * hg.d;
  if (weights.shape() != Shape{hg.n, hg.heads, J, J}) {
    throw DimensionError("attention weights " + to_string(weights.shape()) + " do not match qkv " +
                         to_string(qkv.shape()) + " with " + std::to_string(heads) + " heads");
  }
  Tensor out({hg.n, J, hg.d});
  auto p = weights.values();
  auto x = qkv.values();
  auto y = out.mutable_values();
  for (std::size_t n = 0; n < hg.n; ++n) {
    for (std::size_t h = 0; h < hg.heads; ++h) {
      ConstDense w(p.data() + (n * hg.heads + h) * J * J, idx(J), idx(J));
      ConstStrided v(x.data() + n * J * row + 2 * hg.d + h * dk, idx(J), idx(dk), Stride(idx(row)));
      Strided o(y.data() + n * J * hg.d + h * dk, idx(J), idx(dk), Stride(idx(hg.d)));
      o.noalias() = w * v;
    }
  }
  if (detail::should_record({&weights, &qkv})) {
    detail::record(out, [weights, qkv, hg](std::span<const double> g) {
      auto gw = grad_target(weights);
      auto gx = grad_target(qkv);
      auto p = weights.values();
      auto x = qkv.values();
      const std::size_t J = hg.j, dk = hg.dk, row = 3 * hg.d;
      for (std::size_t n = 0; n < hg.n; ++n) {
        for (std::size_t h = 0; h < hg.heads; ++h) {
          const std::size_t woff = (n * hg.heads + h) * J * J;
          const std::size_t voff = n * J * row + 2 * hg.d + h * dk;
          ConstStrided go(g.data() + n * J * hg.d + h * dk, idx(J), idx(dk), Stride(idx(hg.d)));
          if (!gw.empty()) {
            ConstStrided v(x.data() + voff, idx(J), idx(dk), Stride(idx(row)));
            Dense dw(gw.data() + woff, idx(J), idx(J));
            dw.noalias() += go * v.transpose();
          }
          if (!gx.empty()) {
            ConstDense w(p.data() + woff, idx(J), idx(J));
            Strided dv(gx.data() + voff, idx(J), idx(dk), Stride(idx(row)));
            dv.noalias() += w.transpose() * go;
          }
        }
      }
    });
  }
  return out;
}

AttentionBlock::AttentionBlock(std::size_t d, std::size_t heads, std::size_t ffn_hidden, std::mt19937_64& rng)
    : norm1(d), qkv(d, 3 * d, rng), out(d, d, rng), norm2(d), heads_(heads) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("head count " + std::to_string(heads) + " does not divide width " + std::to_string(d));
  }
  if (ffn_hidden == 0) throw ConfigError("feedforward width must be positive");
  ffn_in = Linear(d, ffn_hidden, rng);
  ffn_out = Linear(ffn_hidden, d, rng);
}

Tensor AttentionBlock::forward(const Tensor& x, AttentionTrace* trace) const {
  const std::size_t d = norm1.gamma.numel();
  if (x.rank() != 3 || x.dim(2) != d) {
    throw DimensionError("attention expects (N, J, " + std::to_string(d) + "), got " + to_string(x.shape()));
  }
  Tensor h;
  {
    RegionScope region("attention");
    Tensor packed = qkv.forward(norm1.forward(x));
    const double factor = 1.0 / std::sqrt(static_cast<double>(d / heads_));
    Tensor weights = softmax(scale(attention_scores(packed, heads_), factor), 3);
    if (trace) trace->weights = weights.detach();
    h = add(x, out.forward(attention_mix(weights, packed, heads_)));
  }
  RegionScope region("ffn");
  return add(h, ffn_out.forward(relu(ffn_in.forward(norm2.forward(h)))));
}

void AttentionBlock::collect_parameters(const std::string& prefix, ParameterList& out_params) const {
  norm1.collect_parameters(prefix + "norm1.", out_params);
  qkv.collect_parameters(prefix + "qkv.", out_params);
  out.collect_parameters(prefix + "out.", out_params);
  norm2.collect_parameters(prefix + "norm2.", out_params);
  ffn_in.collect_parameters(prefix + "ffn_in.", out_params);
  ffn_out.collect_parameters(prefix + "ffn_out.", out_params);
}

}  // namespace tabseq::nn
