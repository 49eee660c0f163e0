#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cvit {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool leaf = true;
};

}  // namespace detail

/// Dense row-major tensor with shared-handle semantics: copying a Tensor
/// yields a second handle onto the same storage. Use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }
  T operator[](std::size_t i) const { return impl_->data[i]; }
  T at(std::size_t row, std::size_t col) const;
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  // Clearing the flag also drops any stored gradient.
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  // Allocates a zero gradient on first use. Requires requires_grad().
  std::span<T> mutable_grad();
  void zero_grad();
  void clear_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace cvit
