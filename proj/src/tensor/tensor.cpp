#include "tabseq/tensor.h"

#include <numeric>
#include <sstream>

#include "tabseq/error.h"

namespace tabseq {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape) : impl_(std::make_shared<detail::TensorImpl>()) {
  const auto n = tabseq::numel(shape);
  impl_->shape = std::move(shape);
  impl_->storage = std::make_shared<std::vector<double>>(n, 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (tabseq::numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->storage = std::make_shared<std::vector<double>>(std::move(values));
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t(std::move(shape));
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), 1.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = tabseq::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->storage->size() : 0; }

std::span<const double> Tensor::values() const {
  if (!impl_) return {};
  return {impl_->storage->data(), impl_->storage->size()};
}

std::span<double> Tensor::mutable_values() const {
  if (!impl_) return {};
  return {impl_->storage->data(), impl_->storage->size()};
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return (*impl_->storage)[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw IndexError("index rank mismatch for shape " + to_string(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw IndexError("index out of range for shape " + to_string(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return (*impl_->storage)[flat];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw ContractError("use of undefined tensor");
  if (impl_->tracked) throw ContractError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
}

bool Tensor::needs_grad() const { return impl_ && (impl_->requires_grad || impl_->tracked); }

bool Tensor::is_leaf() const { return impl_ && !impl_->tracked; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!impl_) return {};
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

Tensor Tensor::clone() const {
  if (!impl_) return {};
  return Tensor(impl_->shape, *impl_->storage, false);
}

Tensor Tensor::detach() const { return alias_with_shape(*this, shape()); }

Tensor alias_with_shape(const Tensor& t, Shape shape) {
  if (numel(shape) != t.numel()) {
    throw DimensionError("cannot view " + to_string(t.shape()) + " as " + to_string(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = t.impl()->storage;
  return Tensor(std::move(impl));
}

}  // namespace tabseq
