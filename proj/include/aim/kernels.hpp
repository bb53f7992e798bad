#pragma once

#include <cstddef>
#include <span>

// Dense GEMM kernels used by the tape. Every kernel has a serial reference
// and an OpenMP variant that partitions output rows across threads. Each
// output element is reduced in the same order in both variants, so the two
// produce bit-identical results for any thread count.
namespace aim::kernels {

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n);
void gemm_nn_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n);

// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t n, std::size_t k);
void gemm_nt_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t n, std::size_t k);

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n);
void gemm_tn_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n);

// Dispatchers: parallel above a work threshold and outside an active
// parallel region, serial otherwise.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);

// Work (multiply-adds) above which the dispatchers go parallel.
inline constexpr std::size_t kParallelWorkThreshold = std::size_t{1} << 16;

bool in_parallel_region();
int max_threads();

}  // namespace aim::kernels
