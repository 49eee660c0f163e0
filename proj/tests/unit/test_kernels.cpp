#include <gtest/gtest.h>

#include <cstring>
#include <vector>

#include "cvit/crypto.hpp"
#include "cvit/data.hpp"
#include "cvit/kernels.hpp"
#include "cvit/random.hpp"
#include "support/oracles.hpp"

using namespace cvit;

namespace {

template <typename T>
std::vector<T> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(n);
  for (T& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

template <typename T>
bool bitwise_equal(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

// Restores the global worker count after a test changes it.
class ThreadsGuard {
 public:
  ThreadsGuard() : saved_(kernels::worker_threads()) {}
  ~ThreadsGuard() { kernels::set_worker_threads(saved_); }

 private:
  int saved_;
};

}  // namespace

TEST(Kernels, SerialGemmMatchesTripleLoop) {
  const std::size_t m = 7, k = 9, n = 5;
  const auto a = random_values<double>(m * k, 1);
  const auto b = random_values<double>(k * n, 2);
  std::vector<double> c(m * n, 0.0);
  kernels::serial::gemm_nn<double>(a, b, c, m, k, n);
  EXPECT_LE(oracle::max_relative_error(c, oracle::matmul(a, b, m, k, n)), 1e-12);
}

TEST(Kernels, GemmAccumulatesIntoOutput) {
  const std::vector<double> a{1, 2};
  const std::vector<double> b{3, 4};
  std::vector<double> c{10.0};
  kernels::serial::gemm_nn<double>(a, b, c, 1, 2, 1);
  EXPECT_EQ(c[0], 21.0);
}

TEST(Kernels, TransposedVariantsAgree) {
  const std::size_t m = 6, k = 4, n = 3;
  const auto a = random_values<double>(m * k, 3);
  const auto b = random_values<double>(k * n, 4);
  std::vector<double> bt(n * k), at(k * m);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
    for (std::size_t j = 0; j < m; ++j) at[i * m + j] = a[j * k + i];
  }
  std::vector<double> nn(m * n, 0.0), nt(m * n, 0.0), tn(m * n, 0.0);
  kernels::serial::gemm_nn<double>(a, b, nn, m, k, n);
  kernels::serial::gemm_nt<double>(a, bt, nt, m, k, n);
  kernels::serial::gemm_tn<double>(at, b, tn, m, k, n);
  EXPECT_LE(oracle::max_relative_error(nt, nn), 1e-12);
  EXPECT_LE(oracle::max_relative_error(tn, nn), 1e-12);
}

template <typename T>
class ParallelGemm : public ::testing::Test {};
using Precisions = ::testing::Types<float, double>;
TYPED_TEST_SUITE(ParallelGemm, Precisions);

TYPED_TEST(ParallelGemm, BitwiseEqualToSerial) {
  using T = TypeParam;
  const std::size_t m = 67, k = 129, n = 45;
  for (int threads : {1, 2, 3, 8}) {
    const auto a = random_values<T>(m * k, 5);
    const auto b = random_values<T>(k * n, 6);
    const auto bt = random_values<T>(n * k, 7);
    const auto at = random_values<T>(k * m, 8);
    std::vector<T> s(m * n, T{0}), p(m * n, T{0});
    kernels::serial::gemm_nn<T>(a, b, s, m, k, n);
    kernels::parallel::gemm_nn<T>(a, b, p, m, k, n, threads);
    EXPECT_TRUE(bitwise_equal(s, p)) << "nn threads=" << threads;
    std::fill(s.begin(), s.end(), T{0});
    std::fill(p.begin(), p.end(), T{0});
    kernels::serial::gemm_nt<T>(a, bt, s, m, k, n);
    kernels::parallel::gemm_nt<T>(a, bt, p, m, k, n, threads);
    EXPECT_TRUE(bitwise_equal(s, p)) << "nt threads=" << threads;
    std::fill(s.begin(), s.end(), T{0});
    std::fill(p.begin(), p.end(), T{0});
    kernels::serial::gemm_tn<T>(at, b, s, m, k, n);
    kernels::parallel::gemm_tn<T>(at, b, p, m, k, n, threads);
    EXPECT_TRUE(bitwise_equal(s, p)) << "tn threads=" << threads;
  }
}

TEST(Kernels, ForEachIndexVisitsEveryIndexOnce) {
  ThreadsGuard guard;
  for (int threads : {0, 1, 4}) {
    kernels::set_worker_threads(threads);
    std::vector<int> hits(1000, 0);
    kernels::for_each_index(hits.size(), [&](std::size_t i) { hits[i] += 1; });
    EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 1000) << "threads=" << threads;
  }
}

TEST(Kernels, BatchEncryptionIndependentOfThreads) {
  ThreadsGuard guard;
  Rng rng(12);
  std::vector<ImageU8> images;
  for (int i = 0; i < 9; ++i) images.push_back(oracle::random_image(rng, 32, 32));
  const BlockPermutation perm = derive_permutation(EncryptionKey{77}, 8);
  kernels::set_worker_threads(0);
  auto serial = images;
  encrypt_images(serial, perm);
  kernels::set_worker_threads(4);
  auto parallel = images;
  encrypt_images(parallel, perm);
  EXPECT_EQ(serial, parallel);
}

TEST(Kernels, PreparedDatasetIndependentOfThreads) {
  ThreadsGuard guard;
  std::vector<Cifar10Record> records(6);
  Rng rng(4);
  for (auto& r : records) {
    r.label = static_cast<std::uint8_t>(rng.below(10));
    for (auto& p : r.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  }
  PreprocessSpec spec;
  spec.target_size = 64;
  spec.key = EncryptionKey{3};
  spec.block_size = 16;
  kernels::set_worker_threads(0);
  const auto a = prepare<float>(records, spec);
  kernels::set_worker_threads(3);
  const auto b = prepare<float>(records, spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_TRUE(bitwise_equal(a[i].image.values, b[i].image.values));
  }
}

TEST(Kernels, ThreadsFromEnvironment) {
  ::setenv("CIPHER_VIT_THREADS", "0", 1);
  EXPECT_EQ(kernels::threads_from_env(5), 0);
  ::setenv("CIPHER_VIT_THREADS", "3", 1);
  EXPECT_EQ(kernels::threads_from_env(5), 3);
  ::setenv("CIPHER_VIT_THREADS", "many", 1);
  EXPECT_EQ(kernels::threads_from_env(5), 5);
  ::unsetenv("CIPHER_VIT_THREADS");
  EXPECT_EQ(kernels::threads_from_env(5), 5);
}
