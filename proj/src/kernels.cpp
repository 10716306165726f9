#include "rltopic/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <cstring>

namespace rltopic::kernels {

namespace {

// below this many multiply-adds a parallel region costs more than it saves
constexpr std::size_t kParallelWork = 1 << 15;

inline void matmul_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                       std::size_t n) {
    std::memset(c_row, 0, n * sizeof(double));
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a_row[p];
        if (av == 0.0) continue;
        const double* b_row = b + p * n;
        for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
}

inline void matmul_tn_row(const double* a, const double* b, double* c_row, std::size_t m,
                          std::size_t k, std::size_t n, std::size_t row) {
    for (std::size_t i = 0; i < m; ++i) {
        const double av = a[i * k + row];
        if (av == 0.0) continue;
        const double* b_row = b + i * n;
        for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
}

inline void matmul_nt_row(const double* a_row, const double* b, double* c_row, std::size_t n,
                          std::size_t k) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* b_row = b + p * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += a_row[j] * b_row[j];
        c_row[p] += s;
    }
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) matmul_row(a + i * k, b, c + i * n, k, n);
}

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_row(a + i * k, b, c + i * n, k, n);
}

void matmul_tn_acc_serial(const double* a, const double* b, double* c, std::size_t m,
                          std::size_t k, std::size_t n) {
    for (std::size_t r = 0; r < k; ++r) matmul_tn_row(a, b, c + r * n, m, k, n, r);
}

void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (std::ptrdiff_t r = 0; r < rows; ++r) matmul_tn_row(a, b, c + r * n, m, k, n, r);
}

void matmul_nt_acc_serial(const double* a, const double* b, double* c, std::size_t m,
                          std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) matmul_nt_row(a + i * n, b, c + i * k, n, k);
}

void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                   std::size_t k) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_nt_row(a + i * n, b, c + i * k, n, k);
}

std::size_t intersect_count(std::span<const std::uint64_t> x, std::span<const std::uint64_t> y) {
    std::size_t count = 0;
    const std::size_t n = std::min(x.size(), y.size());
    for (std::size_t i = 0; i < n; ++i) count += static_cast<std::size_t>(std::popcount(x[i] & y[i]));
    return count;
}

void pair_intersections_serial(std::span<const std::uint64_t> sets, std::size_t words_per_set,
                               std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs,
                               std::span<std::uint32_t> out) {
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        auto x = sets.subspan(pairs[p].first * words_per_set, words_per_set);
        auto y = sets.subspan(pairs[p].second * words_per_set, words_per_set);
        out[p] = static_cast<std::uint32_t>(intersect_count(x, y));
    }
}

void pair_intersections(std::span<const std::uint64_t> sets, std::size_t words_per_set,
                        std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs,
                        std::span<std::uint32_t> out) {
    const auto count = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(static) if (pairs.size() * words_per_set >= kParallelWork)
    for (std::ptrdiff_t p = 0; p < count; ++p) {
        auto x = sets.subspan(pairs[p].first * words_per_set, words_per_set);
        auto y = sets.subspan(pairs[p].second * words_per_set, words_per_set);
        out[p] = static_cast<std::uint32_t>(intersect_count(x, y));
    }
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace rltopic::kernels
