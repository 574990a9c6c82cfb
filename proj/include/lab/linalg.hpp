#pragma once

#include <cstddef>
#include <vector>

namespace lab::linalg {

// C (m x n) = A (m x k) . B (k x n), all row-major. transpose_b reads B as
// (n x k) and multiplies by its transpose. accumulate adds into C instead of
// overwriting. Backed by BLAS dgemm, pinned to one thread for determinism.
void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n, bool transpose_a = false,
            bool transpose_b = false, bool accumulate = false);

// Cholesky factor L (lower triangular, row-major) of a symmetric
// positive-definite matrix; throws degenerate_error if not SPD.
std::vector<double> cholesky(const std::vector<double>& a, std::size_t n);

// log(det(A)) for SPD A via its Cholesky factor.
double spd_log_det(const std::vector<double>& a, std::size_t n);

// Solve A x = b for SPD A (forward+back substitution over the factor).
std::vector<double> spd_solve(const std::vector<double>& a,
                              const std::vector<double>& b, std::size_t n);

}  // namespace lab::linalg
