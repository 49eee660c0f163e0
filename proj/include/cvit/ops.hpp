#pragma once

// Differentiable tensor primitives. Matrix ops take rank-2 tensors; a rank-1
// tensor of length n is accepted where a [1×n] row is expected.

#include <cstddef>
#include <span>

#include "cvit/tensor.hpp"

namespace cvit {

// Tanh approximation of GELU; constants fixed for reproducibility.
inline constexpr double kGeluSqrt2OverPi = 0.7978845608028654;
inline constexpr double kGeluCubic = 0.044715;

// a[m×k] · b[k×n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// a[m×k] · b[n×k]ᵀ
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

// x[m×k] · w[n×k]ᵀ + bias[n]; bias may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// x[m×n] + row[n] broadcast over rows.
template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> mean(const Tensor<T>& a);

// Numerically stable (max-subtracted) softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// Normalizes each row of x over its last dimension, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-6));

template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// -log softmax(logits)[label] for a single row of logits.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label);

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count);

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts);

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& top, const Tensor<T>& bottom);

// Row `index` of x as a [1×n] tensor.
template <typename T>
Tensor<T> select_row(const Tensor<T>& x, std::size_t index);

}  // namespace cvit
