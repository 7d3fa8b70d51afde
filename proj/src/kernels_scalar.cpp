#include "fqeval/kernels.hpp"

namespace fqeval::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void sym_rank1_upper(double* a, const double* x, double alpha, std::size_t d) {
  for (std::size_t i = 0; i < d; ++i) {
    const double xi = alpha * x[i];
    double* row = a + i * d;
    for (std::size_t j = i; j < d; ++j) row[j] += xi * x[j];
  }
}

void outer_acc(double* a, const double* x, const double* y, double alpha,
               std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double xi = alpha * x[i];
    double* row = a + i * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += xi * y[j];
  }
}

}  // namespace fqeval::kernels::scalar
