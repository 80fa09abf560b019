#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tabseq/tensor.h"

namespace tabseq {

// Numpy-style (right-aligned) broadcast of two shapes; throws DimensionError.
Shape broadcast_shapes(const Shape& a, const Shape& b);

// Shape manipulation. reshape and select are views and are not charged to the
// tape's byte counter; stack and concat allocate.
Tensor reshape(const Tensor& t, Shape shape);
Tensor select(const Tensor& t, std::size_t axis, std::size_t index);
// Contiguous range [start, start+length) along `axis`; view semantics.
Tensor narrow(const Tensor& t, std::size_t axis, std::size_t start, std::size_t length);
Tensor stack(std::span<const Tensor> ts, std::size_t axis);
Tensor concat(std::span<const Tensor> ts, std::size_t axis);

// Broadcasting binary arithmetic.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
inline Tensor broadcast_mul(const Tensor& a, const Tensor& b) { return mul(a, b); }

Tensor scale(const Tensor& t, double factor);

// Unary elementwise.
Tensor neg(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);
Tensor tanh(const Tensor& t);
Tensor relu(const Tensor& t);
Tensor sigmoid(const Tensor& t);
Tensor silu(const Tensor& t);
Tensor softplus(const Tensor& t);
Tensor square(const Tensor& t);

// Batched matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
// x (..., k) times w (k, n) plus b (n), as one activation.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Axis reductions remove the reduced axis. max routes gradient to the first
// maximal index.
Tensor sum(const Tensor& t, std::size_t axis);
Tensor mean(const Tensor& t, std::size_t axis);
Tensor max(const Tensor& t, std::size_t axis);
Tensor sum_all(const Tensor& t);
Tensor mean_all(const Tensor& t);

// Numerically stable softmax (max-subtracted) along `axis`.
Tensor softmax(const Tensor& t, std::size_t axis);

// Layer normalization over the last axis with affine gamma/beta (shape [last]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

}  // namespace tabseq
