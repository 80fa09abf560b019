#include <Eigen/Core>

#include "broadcast.h"
#include "tabseq/error.h"
#include "tabseq/ops.h"
#include "tabseq/tape.h"

namespace tabseq {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct MatmulGeometry {
  std::size_t m, k, n;
  detail::BroadcastPlan batch;  // over leading axes
  std::size_t batch_count;
  bool flat;  // b has a single batch: fold a's batch into rows
};

MatmulGeometry geometry(const Shape& a, const Shape& b) {
  if (a.size() < 2 || b.size() < 2 || a[a.size() - 1] != b[b.size() - 2]) {
    throw DimensionError("matmul shape mismatch: " + to_string(a) + " x " + to_string(b));
  }
  MatmulGeometry g;
  g.m = a[a.size() - 2];
  g.k = a[a.size() - 1];
  g.n = b[b.size() - 1];
  const Shape batch_a(a.begin(), a.end() - 2);
  const Shape batch_b(b.begin(), b.end() - 2);
  try {
    g.batch = detail::plan_broadcast(batch_a, batch_b);
  } catch (const DimensionError&) {
    throw DimensionError("matmul batch axes not broadcastable: " + to_string(a) + " x " + to_string(b));
  }
  g.batch_count = numel(g.batch.out);
  g.flat = numel(batch_b) == 1;
  return g;
}

template <class F>
void for_each_batch(const MatmulGeometry& g, F&& f) {
  if (g.batch.out.empty()) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  detail::for_each_broadcast(g.batch, f);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto g = geometry(a.shape(), b.shape());
  Shape out_shape = g.batch.out;
  out_shape.push_back(g.m);
  out_shape.push_back(g.n);
  Tensor out(out_shape);
  auto av = a.values();
  auto bv = b.values();
  auto yv = out.mutable_values();
  if (g.flat) {
    const auto rows = static_cast<Eigen::Index>(g.batch_count * g.m);
    MutMap(yv.data(), rows, g.n).noalias() = ConstMap(av.data(), rows, g.k) * ConstMap(bv.data(), g.k, g.n);
  } else {
    for_each_batch(g, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      MutMap(yv.data() + o * g.m * g.n, g.m, g.n).noalias() =
          ConstMap(av.data() + ia * g.m * g.k, g.m, g.k) * ConstMap(bv.data() + ib * g.k * g.n, g.k, g.n);
    });
  }
  if (detail::should_record({&a, &b})) {
    detail::record(out, [a, b, g](std::span<const double> grad) {
      auto ga = detail::grad_target(a);
      auto gb = detail::grad_target(b);
      auto av = a.values();
      auto bv = b.values();
      if (g.flat) {
        const auto rows = static_cast<Eigen::Index>(g.batch_count * g.m);
        ConstMap G(grad.data(), rows, g.n);
        if (!ga.empty()) MutMap(ga.data(), rows, g.k).noalias() += G * ConstMap(bv.data(), g.k, g.n).transpose();
        if (!gb.empty()) MutMap(gb.data(), g.k, g.n).noalias() += ConstMap(av.data(), rows, g.k).transpose() * G;
        return;
      }
      for_each_batch(g, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        ConstMap G(grad.data() + o * g.m * g.n, g.m, g.n);
        if (!ga.empty()) {
          MutMap(ga.data() + ia * g.m * g.k, g.m, g.k).noalias() +=
              G * ConstMap(bv.data() + ib * g.k * g.n, g.k, g.n).transpose();
        }
        if (!gb.empty()) {
          MutMap(gb.data() + ib * g.k * g.n, g.k, g.n).noalias() +=
              ConstMap(av.data() + ia * g.m * g.k, g.m, g.k).transpose() * G;
        }
      });
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() < 1 || w.rank() != 2 || b.rank() != 1 || x.dim(x.rank() - 1) != w.dim(0) || b.dim(0) != w.dim(1)) {
    throw DimensionError("linear shape mismatch: " + to_string(x.shape()) + " x " + to_string(w.shape()) + " + " +
                         to_string(b.shape()));
  }
  const std::size_t k = w.dim(0), n = w.dim(1);
  const auto rows = static_cast<Eigen::Index>(x.numel() / k);
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  {
    auto yv = out.mutable_values();
    MutMap y(yv.data(), rows, n);
    y.noalias() = ConstMap(x.values().data(), rows, k) * ConstMap(w.values().data(), k, n);
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.values().data(), n);
  }
  if (detail::should_record({&x, &w, &b})) {
    detail::record(out, [x, w, b, rows, k, n](std::span<const double> grad) {
      ConstMap G(grad.data(), rows, n);
      auto gx = detail::grad_target(x);
      auto gw = detail::grad_target(w);
      auto gb = detail::grad_target(b);
      if (!gx.empty()) MutMap(gx.data(), rows, k).noalias() += G * ConstMap(w.values().data(), k, n).transpose();
      if (!gw.empty()) MutMap(gw.data(), k, n).noalias() += ConstMap(x.values().data(), rows, k).transpose() * G;
      if (!gb.empty()) Eigen::Map<Eigen::RowVectorXd>(gb.data(), n) += G.colwise().sum();
    });
  }
  return out;
}

}  // namespace tabseq
