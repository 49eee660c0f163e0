#include "cvit/kernels.hpp"

#include <omp.h>

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <string_view>

namespace cvit::kernels {
namespace {

std::atomic<int> g_threads{threads_from_env(omp_get_max_threads())};

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1U << 15;

}  // namespace

int worker_threads() { return g_threads.load(std::memory_order_relaxed); }

void set_worker_threads(int n) {
  g_threads.store(n < 0 ? 0 : n, std::memory_order_relaxed);
}

int threads_from_env(int fallback) {
  const char* raw = std::getenv("CIPHER_VIT_THREADS");
  if (raw == nullptr) return fallback;
  std::string_view text(raw);
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value < 0) {
    return fallback;
  }
  return value;
}

namespace serial {

template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b.data() + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T api = a[p * m + i];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

}  // namespace serial

namespace parallel {

// Rows of C are split across threads; each row runs the serial loop body
// unchanged.

template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n, int threads) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (long long i = 0; i < rows; ++i) {
    T* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n, int threads) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (long long i = 0; i < rows; ++i) {
    const T* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b.data() + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n, int threads) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (long long i = 0; i < rows; ++i) {
    T* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T api = a[p * m + i];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

}  // namespace parallel

namespace {

bool use_parallel(std::size_t m, std::size_t k, std::size_t n) {
  return worker_threads() > 1 && m > 1 && m * k * n >= kParallelWork;
}

}  // namespace

template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m, k, n)) {
    parallel::gemm_nn(a, b, c, m, k, n, worker_threads());
  } else {
    serial::gemm_nn(a, b, c, m, k, n);
  }
}

template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m, k, n)) {
    parallel::gemm_nt(a, b, c, m, k, n, worker_threads());
  } else {
    serial::gemm_nt(a, b, c, m, k, n);
  }
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m, k, n)) {
    parallel::gemm_tn(a, b, c, m, k, n, worker_threads());
  } else {
    serial::gemm_tn(a, b, c, m, k, n);
  }
}

#define CVIT_INSTANTIATE_GEMM(T)                                                   \
  template void serial::gemm_nn<T>(std::span<const T>, std::span<const T>,         \
                                   std::span<T>, std::size_t, std::size_t,         \
                                   std::size_t);                                   \
  template void serial::gemm_nt<T>(std::span<const T>, std::span<const T>,         \
                                   std::span<T>, std::size_t, std::size_t,         \
                                   std::size_t);                                   \
  template void serial::gemm_tn<T>(std::span<const T>, std::span<const T>,         \
                                   std::span<T>, std::size_t, std::size_t,         \
                                   std::size_t);                                   \
  template void parallel::gemm_nn<T>(std::span<const T>, std::span<const T>,       \
                                     std::span<T>, std::size_t, std::size_t,       \
                                     std::size_t, int);                            \
  template void parallel::gemm_nt<T>(std::span<const T>, std::span<const T>,       \
                                     std::span<T>, std::size_t, std::size_t,       \
                                     std::size_t, int);                            \
  template void parallel::gemm_tn<T>(std::span<const T>, std::span<const T>,       \
                                     std::span<T>, std::size_t, std::size_t,       \
                                     std::size_t, int);                            \
  template void gemm_nn<T>(std::span<const T>, std::span<const T>, std::span<T>,   \
                           std::size_t, std::size_t, std::size_t);                 \
  template void gemm_nt<T>(std::span<const T>, std::span<const T>, std::span<T>,   \
                           std::size_t, std::size_t, std::size_t);                 \
  template void gemm_tn<T>(std::span<const T>, std::span<const T>, std::span<T>,   \
                           std::size_t, std::size_t, std::size_t);

CVIT_INSTANTIATE_GEMM(float)
CVIT_INSTANTIATE_GEMM(double)

#undef CVIT_INSTANTIATE_GEMM

}  // namespace cvit::kernels
