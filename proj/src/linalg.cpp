#include "lab/linalg.hpp"

#include <cblas.h>

#include <cmath>
#include <mutex>

#include "lab/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace lab::linalg {

namespace {

void pin_blas_threads() {
  static std::once_flag flag;
  std::call_once(flag, [] { openblas_set_num_threads(1); });
}

}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n, bool transpose_a, bool transpose_b,
            bool accumulate) {
  pin_blas_threads();
  const auto ta = transpose_a ? CblasTrans : CblasNoTrans;
  const auto tb = transpose_b ? CblasTrans : CblasNoTrans;
  const int lda = static_cast<int>(transpose_a ? m : k);
  const int ldb = static_cast<int>(transpose_b ? k : n);
  cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, a, lda, b, ldb, accumulate ? 1.0 : 0.0,
              c, static_cast<int>(n));
}

std::vector<double> cholesky(const std::vector<double>& a, std::size_t n) {
  if (a.size() != n * n) throw shape_error("cholesky: matrix size mismatch");
  std::vector<double> l(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (std::size_t p = 0; p < j; ++p) s -= l[i * n + p] * l[j * n + p];
      if (i == j) {
        if (s <= 0.0 || !std::isfinite(s)) {
          throw degenerate_error("cholesky: matrix is not positive definite");
        }
        l[i * n + i] = std::sqrt(s);
      } else {
        l[i * n + j] = s / l[j * n + j];
      }
    }
  }
  return l;
}

double spd_log_det(const std::vector<double>& a, std::size_t n) {
  const auto l = cholesky(a, n);
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) d += std::log(l[i * n + i]);
  return 2.0 * d;
}

std::vector<double> spd_solve(const std::vector<double>& a,
                              const std::vector<double>& b, std::size_t n) {
  if (b.size() != n) throw shape_error("spd_solve: vector size mismatch");
  const auto l = cholesky(a, n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t p = 0; p < i; ++p) s -= l[i * n + p] * y[p];
    y[i] = s / l[i * n + i];
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = y[i];
    for (std::size_t p = i + 1; p < n; ++p) s -= l[p * n + i] * x[p];
    x[i] = s / l[i * n + i];
  }
  return x;
}

}  // namespace lab::linalg
