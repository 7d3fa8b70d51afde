#include "fqeval/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace fqeval::kernels {

namespace {

struct Table {
  Backend backend;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
  void (*sym_rank1_upper)(double*, const double*, double, std::size_t);
  void (*outer_acc)(double*, const double*, const double*, double, std::size_t, std::size_t);
};

constexpr Table kScalarTable = {
    Backend::scalar, scalar::dot,   scalar::axpy,
    scalar::scale,   scalar::sym_rank1_upper, scalar::outer_acc,
};

#if defined(FQEVAL_HAVE_AVX2_TU)
constexpr Table kAvx2Table = {
    Backend::avx2, avx2::dot,   avx2::axpy,
    avx2::scale,   avx2::sym_rank1_upper, avx2::outer_acc,
};
#endif

Table resolve() {
  const char* env = std::getenv("FQEVAL_KERNELS");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return kScalarTable;
#if defined(FQEVAL_HAVE_AVX2_TU)
  if (avx2_supported() && (env == nullptr || std::strcmp(env, "avx2") == 0))
    return kAvx2Table;
#endif
  return kScalarTable;
}

const Table& table() {
  static const Table t = resolve();
  return t;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active() { return table().backend; }

std::string_view backend_name() {
  return active() == Backend::avx2 ? "avx2" : "scalar";
}

double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table().axpy(alpha, x, y, n);
}
void scale(double alpha, double* x, std::size_t n) { table().scale(alpha, x, n); }
void sym_rank1_upper(double* a, const double* x, double alpha, std::size_t d) {
  table().sym_rank1_upper(a, x, alpha, d);
}
void outer_acc(double* a, const double* x, const double* y, double alpha,
               std::size_t rows, std::size_t cols) {
  table().outer_acc(a, x, y, alpha, rows, cols);
}

}  // namespace fqeval::kernels
