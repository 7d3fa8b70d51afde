#include "fqeval/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fqeval/errors.hpp"
#include "fqeval/kernels.hpp"

namespace fqeval::linalg {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

std::vector<double> Matrix::matvec(std::span<const double> x) const {
  std::vector<double> y(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i)
    y[i] = kernels::dot(row(i), x.data(), cols_);
  return y;
}

void Matrix::mirror_upper() {
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j) (*this)(j, i) = (*this)(i, j);
}

double Matrix::trace() const {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      kernels::axpy(a(i, k), b.row(k), c.row(i), b.cols());
  return c;
}

Llt llt(const Matrix& a) {
  const std::size_t n = a.rows();
  Llt f;
  f.l = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j) - kernels::dot(f.l.row(j), f.l.row(j), j);
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      f.ok = false;
      f.pivot = j;
      return f;
    }
    const double lj = std::sqrt(diag);
    f.l(j, j) = lj;
    for (std::size_t i = j + 1; i < n; ++i) {
      const double v = a(i, j) - kernels::dot(f.l.row(i), f.l.row(j), j);
      f.l(i, j) = v / lj;
    }
  }
  f.ok = true;
  f.pivot = n;
  return f;
}

void llt_solve(const Llt& f, double* b) {
  const std::size_t n = f.l.rows();
  // L y = b
  for (std::size_t i = 0; i < n; ++i)
    b[i] = (b[i] - kernels::dot(f.l.row(i), b, i)) / f.l(i, i);
  // L^T x = y
  for (std::size_t ii = n; ii-- > 0;) {
    double acc = b[ii];
    for (std::size_t j = ii + 1; j < n; ++j) acc -= f.l(j, ii) * b[j];
    b[ii] = acc / f.l(ii, ii);
  }
}

std::vector<double> llt_solve(const Llt& f, std::span<const double> b) {
  std::vector<double> x(b.begin(), b.end());
  llt_solve(f, x.data());
  return x;
}

void forward_solve(const Matrix& l, double* b) {
  const std::size_t n = l.rows();
  for (std::size_t i = 0; i < n; ++i)
    b[i] = (b[i] - kernels::dot(l.row(i), b, i)) / l(i, i);
}

double quad_inv(const Llt& f, std::span<const double> v) {
  std::vector<double> y(v.begin(), v.end());
  forward_solve(f.l, y.data());
  return kernels::dot(y.data(), y.data(), y.size());
}

std::vector<double> sym_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  if (n == 0) return {};
  // Cyclic Jacobi rotations; plenty for the d <= ~60 matrices we see.
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30 * (1.0 + a.trace() * a.trace())) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

double spectral_norm(const Matrix& a) {
  // sqrt(lambda_max(A^T A))
  Matrix ata = matmul(a.transposed(), a);
  const auto ev = sym_eigenvalues(ata);
  if (ev.empty()) return 0.0;
  return std::sqrt(std::max(0.0, ev.back()));
}

double sym_cond_estimate(const Matrix& a) {
  const auto ev = sym_eigenvalues(a);
  if (ev.empty()) return 0.0;
  const double hi = ev.back();
  const double lo = ev.front();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

Matrix whiten(const Matrix& l1, const Matrix& a12, const Matrix& l2) {
  // X = L1^{-1} A12, column by column of A12 via forward substitution on rows.
  Matrix x = a12;
  const std::size_t n1 = l1.rows();
  const std::size_t n2 = l2.rows();
  std::vector<double> col(n1);
  for (std::size_t j = 0; j < n2; ++j) {
    for (std::size_t i = 0; i < n1; ++i) col[i] = x(i, j);
    forward_solve(l1, col.data());
    for (std::size_t i = 0; i < n1; ++i) x(i, j) = col[i];
  }
  // W = X L2^{-T}  <=>  W^T = L2^{-1} X^T (forward substitution per row of X).
  std::vector<double> rowbuf(n2);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) rowbuf[j] = x(i, j);
    forward_solve(l2, rowbuf.data());
    for (std::size_t j = 0; j < n2; ++j) x(i, j) = rowbuf[j];
  }
  return x;
}

}  // namespace fqeval::linalg
