// Serial reference vs OpenMP kernels. Thread count for the parallel runs
// comes from CIPHER_VIT_THREADS (default: all cores).

#include <benchmark/benchmark.h>

#include <vector>

#include "cvit/crypto.hpp"
#include "cvit/kernels.hpp"
#include "cvit/random.hpp"

namespace {

using namespace cvit;

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

// Shapes of the ViT-B/16 patch embedding and MLP projections on one image.
void gemm_args(benchmark::internal::Benchmark* b) {
  b->Args({196, 768, 768})->Args({197, 768, 3072})->Args({197, 3072, 768});
}

void BM_GemmNtSerial(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * k, 1);
  const auto w = random_values(n * k, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    kernels::serial::gemm_nt<float>(a, w, c, m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}
BENCHMARK(BM_GemmNtSerial)->Apply(gemm_args)->Unit(benchmark::kMillisecond);

void BM_GemmNtParallel(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * k, 1);
  const auto w = random_values(n * k, 2);
  std::vector<float> c(m * n);
  const int threads = std::max(1, kernels::worker_threads());
  for (auto _ : state) {
    kernels::parallel::gemm_nt<float>(a, w, c, m, k, n, threads);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["threads"] = threads;
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}
BENCHMARK(BM_GemmNtParallel)->Apply(gemm_args)->Unit(benchmark::kMillisecond);

std::vector<ImageU8> random_images(std::size_t count) {
  Rng rng(7);
  std::vector<ImageU8> images(count);
  for (auto& img : images) {
    img.height = img.width = 224;
    img.pixels.resize(3 * 224 * 224);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  }
  return images;
}

void BM_EncryptBatch(benchmark::State& state) {
  const int saved = kernels::worker_threads();
  kernels::set_worker_threads(static_cast<int>(state.range(0)));
  auto images = random_images(64);
  const BlockPermutation perm = derive_permutation(EncryptionKey{42}, 16);
  for (auto _ : state) {
    encrypt_images(images, perm);
    benchmark::ClobberMemory();
  }
  kernels::set_worker_threads(saved);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * images.size()));
}
// 0 = serial path; the second argument uses every available core.
BENCHMARK(BM_EncryptBatch)->Arg(0)->Arg(kernels::threads_from_env(0) > 0 ? kernels::threads_from_env(0) : 4)
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
