// Parallel kernels against their serial reference implementations.
#include <benchmark/benchmark.h>

#include <vector>

#include "deepfeat/common/rng.hpp"
#include "deepfeat/nn/kernels.hpp"
#include "deepfeat/rocket/rocket.hpp"

using namespace deepfeat;
namespace k = deepfeat::nn::kernels;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

template <bool Reference>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * kk, 1);
  const auto b = random_values(kk * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (Reference) {
      k::reference::gemm(k::Trans::No, k::Trans::No, m, n, kk, 1.0f, a.data(), kk, b.data(), n, 0.0f, c.data(), n);
    } else {
      k::gemm(k::Trans::No, k::Trans::No, m, n, kk, 1.0f, a.data(), kk, b.data(), n, 0.0f, c.data(), n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * m * n * kk, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

// Transformer-sized (tokens x 768 x 768), the fusion's rocket layer and a small square case.
#define GEMM_SHAPES Args({256, 768, 768})->Args({16, 1024, 20000})->Args({128, 128, 128})
BENCHMARK(BM_Gemm<false>)->GEMM_SHAPES->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gemm<true>)->GEMM_SHAPES->Unit(benchmark::kMillisecond);

template <bool Reference>
void BM_RocketExtract(benchmark::State& state) {
  const auto bank = rocket::generate_bank(0);
  const auto x = random_values(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    auto f = Reference ? rocket::reference::extract(x, bank) : rocket::extract(x, bank);
    benchmark::DoNotOptimize(f.data());
  }
}
BENCHMARK(BM_RocketExtract<false>)->Arg(128)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RocketExtract<true>)->Arg(128)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
