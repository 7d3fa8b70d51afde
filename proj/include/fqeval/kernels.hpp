#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel primitives behind the estimator inner loops (regression
// target construction, Gram/RHS assembly, residual outer products).
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2 variant selected once at runtime. The two lanes agree to floating
// point reassociation (reductions use different summation orders); the
// equivalence tests pin the tolerance. Set FQEVAL_KERNELS=scalar to force
// the reference lane.

namespace fqeval::kernels {

enum class Backend { scalar, avx2 };

Backend active();
std::string_view backend_name();
bool avx2_supported();

// Reductions.
double dot(const double* a, const double* b, std::size_t n);

// Elementwise updates.
/// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);

// Rank-1 accumulation into row-major matrices.
/// Upper triangle of a (d x d): a[i][j] += alpha * x[i] * x[j], j >= i.
void sym_rank1_upper(double* a, const double* x, double alpha, std::size_t d);
/// a (rows x cols): a[i][j] += alpha * x[i] * y[j].
void outer_acc(double* a, const double* x, const double* y, double alpha,
               std::size_t rows, std::size_t cols);

// Reference lane, callable directly (used by the equivalence tests).
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
void sym_rank1_upper(double* a, const double* x, double alpha, std::size_t d);
void outer_acc(double* a, const double* x, const double* y, double alpha,
               std::size_t rows, std::size_t cols);
}  // namespace scalar

#if defined(FQEVAL_HAVE_AVX2_TU)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
void sym_rank1_upper(double* a, const double* x, double alpha, std::size_t d);
void outer_acc(double* a, const double* x, const double* y, double alpha,
               std::size_t rows, std::size_t cols);
}  // namespace avx2
#endif

}  // namespace fqeval::kernels
