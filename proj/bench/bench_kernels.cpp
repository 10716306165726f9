#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "rltopic/kernels.hpp"

namespace {

using namespace rltopic::kernels;

std::vector<double> random_matrix(std::size_t n, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist;
    std::vector<double> v(n);
    for (double& x : v) x = dist(gen);
    return v;
}

// A batch of 1024 rows through a 128 -> V decoder-sized product.
template <auto Kernel>
void BM_Matmul(benchmark::State& state) {
    const std::size_t m = 1024, k = 128, n = static_cast<std::size_t>(state.range(0));
    const auto a = random_matrix(m * k, 1), b = random_matrix(k * n, 2);
    std::vector<double> c(m * n);
    for (auto _ : state) {
        Kernel(a.data(), b.data(), c.data(), m, k, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * m * k * n));
}

template <auto Kernel>
void BM_MatmulTN(benchmark::State& state) {
    const std::size_t m = 1024, k = 128, n = static_cast<std::size_t>(state.range(0));
    const auto a = random_matrix(m * k, 1), b = random_matrix(m * n, 2);
    std::vector<double> c(k * n);
    for (auto _ : state) {
        Kernel(a.data(), b.data(), c.data(), m, k, n);
        benchmark::DoNotOptimize(c.data());
    }
}

template <auto Kernel>
void BM_PairIntersections(benchmark::State& state) {
    const std::size_t vocab = 2000, docs = static_cast<std::size_t>(state.range(0)), words = (docs + 63) / 64;
    std::mt19937_64 gen(3);
    std::vector<std::uint64_t> sets(vocab * words);
    for (auto& w : sets) w = gen() & gen() & gen();
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (std::uint32_t t = 0; t < 50; ++t)
        for (std::uint32_t i = 0; i < 10; ++i)
            for (std::uint32_t j = i + 1; j < 10; ++j) pairs.emplace_back((t * 10 + i) % vocab, (t * 37 + j) % vocab);
    std::vector<std::uint32_t> out(pairs.size());
    for (auto _ : state) {
        Kernel(sets, words, pairs, out);
        benchmark::DoNotOptimize(out.data());
    }
}

}  // namespace

BENCHMARK(BM_Matmul<matmul_serial>)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Matmul<matmul>)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MatmulTN<matmul_tn_acc_serial>)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MatmulTN<matmul_tn_acc>)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PairIntersections<pair_intersections_serial>)->Arg(11314)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_PairIntersections<pair_intersections>)->Arg(11314)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
