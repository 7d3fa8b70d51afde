// AVX2 lane. This translation unit is the only one compiled with -mavx2;
// nothing here runs unless the dispatcher confirmed CPU support.

#include "fqeval/kernels.hpp"

#if defined(FQEVAL_HAVE_AVX2_TU)

#include <immintrin.h>

namespace fqeval::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

void sym_rank1_upper(double* a, const double* x, double alpha, std::size_t d) {
  for (std::size_t i = 0; i < d; ++i) {
    const double xi = alpha * x[i];
    const __m256d xv = _mm256_set1_pd(xi);
    double* row = a + i * d;
    std::size_t j = i;
    for (; j + 4 <= d; j += 4) {
      __m256d rv = _mm256_fmadd_pd(xv, _mm256_loadu_pd(x + j), _mm256_loadu_pd(row + j));
      _mm256_storeu_pd(row + j, rv);
    }
    for (; j < d; ++j) row[j] += xi * x[j];
  }
}

void outer_acc(double* a, const double* x, const double* y, double alpha,
               std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double xi = alpha * x[i];
    const __m256d xv = _mm256_set1_pd(xi);
    double* row = a + i * cols;
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      __m256d rv = _mm256_fmadd_pd(xv, _mm256_loadu_pd(y + j), _mm256_loadu_pd(row + j));
      _mm256_storeu_pd(row + j, rv);
    }
    for (; j < cols; ++j) row[j] += xi * y[j];
  }
}

}  // namespace fqeval::kernels::avx2

#endif  // FQEVAL_HAVE_AVX2_TU
