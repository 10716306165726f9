#pragma once

// Dense and bitset kernels used by the autodiff engine and the coherence
// cache. Each kernel has a serial reference (`*_serial`) and an OpenMP
// version. The parallel versions split work over output rows only, so every
// output element is accumulated in the same order as the serial reference and
// results are bit-identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace rltopic::kernels {

// C[m x n] = A[m x k] * B[k x n]   (C overwritten)
void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);

// C[k x n] += A[m x k]^T * B[m x n]
void matmul_tn_acc_serial(const double* a, const double* b, double* c, std::size_t m,
                          std::size_t k, std::size_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);

// C[m x k] += A[m x n] * B[k x n]^T
void matmul_nt_acc_serial(const double* a, const double* b, double* c, std::size_t m,
                          std::size_t n, std::size_t k);
void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                   std::size_t k);

// popcount(x & y) over equal-length word spans
std::size_t intersect_count(std::span<const std::uint64_t> x, std::span<const std::uint64_t> y);

// out[p] = intersect_count(sets[pairs[p].first], sets[pairs[p].second])
// `sets` is a row-major array of `words_per_set` words per set.
void pair_intersections_serial(std::span<const std::uint64_t> sets, std::size_t words_per_set,
                               std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs,
                               std::span<std::uint32_t> out);
void pair_intersections(std::span<const std::uint64_t> sets, std::size_t words_per_set,
                        std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs,
                        std::span<std::uint32_t> out);

int max_threads();

}  // namespace rltopic::kernels
