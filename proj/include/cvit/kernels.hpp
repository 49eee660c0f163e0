#pragma once

// Dense kernels with a serial reference and an OpenMP variant.
//
// Every output element is owned by exactly one thread and its reduction runs
// in ascending index order, so the serial and parallel variants produce
// bitwise-identical results for any thread count.

#include <cstddef>
#include <span>

namespace cvit::kernels {

// Worker-thread cap. 0 selects the serial kernels.
int worker_threads();
void set_worker_threads(int n);

// Reads CIPHER_VIT_THREADS; returns `fallback` when unset or unparsable.
int threads_from_env(int fallback);

// C[m×n] += A[m×k] · B[k×n]
// C[m×n] += A[m×k] · B[n×k]ᵀ
// C[m×n] += A[k×m]ᵀ · B[k×n]
namespace serial {
template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n);
}  // namespace serial

namespace parallel {
template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n, int threads);
template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n, int threads);
template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n, int threads);
}  // namespace parallel

// Dispatch on worker_threads().
template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n);

// Runs fn(i) for i in [0, count). Iterations must be independent.
template <typename Fn>
void for_each_index(std::size_t count, Fn&& fn) {
  const int threads = worker_threads();
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const auto n = static_cast<long long>(count);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (long long i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
}

}  // namespace cvit::kernels
