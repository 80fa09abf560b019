#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tabseq {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  // Shared so that reshape can alias the same buffer without copying.
  std::shared_ptr<std::vector<double>> storage;
  std::vector<double> grad;
  bool requires_grad = false;
  bool tracked = false;  // output of an op recorded on a tape
};

}  // namespace detail

// Dense row-major tensor handle. Copies share the underlying buffer, like a
// reference-counted framework tensor; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  // True for leaves that require grad and for outputs of recorded ops.
  bool needs_grad() const;
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Untracked deep copy.
  Tensor clone() const;
  // Untracked tensor aliasing the same buffer.
  Tensor detach() const;

  bool same(const Tensor& other) const { return impl_ == other.impl_; }
  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor alias_with_shape(const Tensor&, Shape);

  std::shared_ptr<detail::TensorImpl> impl_;
};

// New untracked handle over the same buffer with a different shape.
Tensor alias_with_shape(const Tensor& t, Shape shape);

}  // namespace tabseq
