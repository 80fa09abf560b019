#pragma once

#include <cstddef>
#include <vector>

#include "tabseq/tensor.h"

namespace tabseq::detail {

// Output shape plus per-axis element strides of each operand (0 on broadcast axes).
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_stride;
  std::vector<std::size_t> b_stride;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b);

// Calls f(out_index, a_index, b_index) for every output element in row-major order.
template <class F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  const std::size_t rank = plan.out.size();
  const std::size_t total = numel(plan.out);
  if (total == 0) return;
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t inner = plan.out[rank - 1];
  const std::size_t sa = plan.a_stride[rank - 1];
  const std::size_t sb = plan.b_stride[rank - 1];
  std::vector<std::size_t> counter(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t i = 0; i < inner; ++i) f(o + i, ia + i * sa, ib + i * sb);
    // Advance the odometer over the outer axes.
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++counter[ax];
      ia += plan.a_stride[ax];
      ib += plan.b_stride[ax];
      if (counter[ax] < plan.out[ax]) break;
      ia -= plan.a_stride[ax] * plan.out[ax];
      ib -= plan.b_stride[ax] * plan.out[ax];
      counter[ax] = 0;
    }
  }
}

// (outer, len, inner) decomposition of a shape around `axis`.
struct AxisSplit {
  std::size_t outer;
  std::size_t len;
  std::size_t inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis);

}  // namespace tabseq::detail
