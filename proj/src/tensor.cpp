#include "cvit/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

#include "cvit/errors.hpp"

namespace cvit {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw DimensionError("tensor shape " + shape_string(shape) +
                           " has a zero extent");
    }
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  validate_shape(shape);
  impl_->data.assign(cvit::numel(shape), T{0});
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  validate_shape(shape);
  if (values.size() != cvit::numel(shape)) {
    throw DimensionError("tensor shape " + shape_string(shape) + " needs " +
                         std::to_string(cvit::numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor out(std::move(shape));
  std::fill(out.impl_->data.begin(), out.impl_->data.end(), value);
  return out;
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a rank-2 tensor");
  if (row >= dim(0) || col >= dim(1)) throw IndexError("tensor index out of range");
  return impl_->data[row * dim(1) + col];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  }
  return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
  return *this;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (!impl_->requires_grad) {
    throw StateError("gradient requested for a tensor that does not require grad");
  }
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T{0});
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(impl_->shape, impl_->data, false);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cvit
