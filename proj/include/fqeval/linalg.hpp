#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Small dense matrices (d x d with d in the tens). Factorizations are plain
// scalar code; the N-scale accumulation work happens in kernels.hpp.

namespace fqeval::linalg {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Matrix transposed() const;
  std::vector<double> matvec(std::span<const double> x) const;
  /// Copies the upper triangle onto the lower one.
  void mirror_upper();
  double trace() const;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

struct Llt {
  Matrix l;          // lower triangular factor, only valid when ok
  bool ok = false;
  std::size_t pivot = 0;  // first non-positive pivot when !ok (== achieved rank)
};

/// Cholesky A = L L^T for symmetric positive definite A.
Llt llt(const Matrix& a);

/// Solves L L^T x = b in place.
void llt_solve(const Llt& f, double* b);
std::vector<double> llt_solve(const Llt& f, std::span<const double> b);

/// Forward substitution only: L y = b in place.
void forward_solve(const Matrix& l, double* b);

/// v^T A^{-1} v given the factor of A (= ||L^{-1} v||^2).
double quad_inv(const Llt& f, std::span<const double> v);

/// Eigenvalues of a symmetric matrix, ascending (cyclic Jacobi).
std::vector<double> sym_eigenvalues(Matrix a);

/// Largest singular value.
double spectral_norm(const Matrix& a);

/// lambda_max / lambda_min of a symmetric PSD matrix (inf if singular).
double sym_cond_estimate(const Matrix& a);

/// L1^{-1} A12 L2^{-T} for lower-triangular L1, L2.
Matrix whiten(const Matrix& l1, const Matrix& a12, const Matrix& l2);

}  // namespace fqeval::linalg
