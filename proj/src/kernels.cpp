#include "aim/kernels.hpp"

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace aim::kernels {

namespace {

inline void nn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                   std::size_t n) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void nt_row(const double* a, const double* b, double* c, std::size_t i, std::size_t n,
                   std::size_t k) {
  const double* arow = a + i * n;
  double* crow = c + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
    crow[p] += acc;
  }
}

// Row p of c = sum_i a[i][p] * b[i], accumulated in ascending i.
inline void tn_row(const double* a, const double* b, double* c, std::size_t p, std::size_t m,
                   std::size_t k, std::size_t n) {
  double* crow = c + p * n;
  for (std::size_t i = 0; i < m; ++i) {
    const double av = a[i * k + p];
    if (av == 0.0) continue;
    const double* brow = b + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

bool go_parallel(std::size_t work) {
  return work >= kParallelWorkThreshold && !in_parallel_region() && max_threads() > 1;
}

}  // namespace

bool in_parallel_region() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_nn_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) nn_row(a.data(), b.data(), c.data(), i, k, n);
}

void gemm_nn_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    nn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n);
  }
}

void gemm_nt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) nt_row(a.data(), b.data(), c.data(), i, n, k);
}

void gemm_nt_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t n, std::size_t k) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    nt_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), n, k);
  }
}

void gemm_tn_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) tn_row(a.data(), b.data(), c.data(), p, m, k, n);
}

void gemm_tn_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < rows; ++p) {
    tn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(p), m, k, n);
  }
}

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (go_parallel(m * k * n)) {
    gemm_nn_parallel(a, b, c, m, k, n);
  } else {
    gemm_nn_serial(a, b, c, m, k, n);
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
  if (go_parallel(m * n * k)) {
    gemm_nt_parallel(a, b, c, m, n, k);
  } else {
    gemm_nt_serial(a, b, c, m, n, k);
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (go_parallel(m * k * n)) {
    gemm_tn_parallel(a, b, c, m, k, n);
  } else {
    gemm_tn_serial(a, b, c, m, k, n);
  }
}

}  // namespace aim::kernels
