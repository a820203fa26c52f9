#pragma once

#include <utility>

#include "icda/linalg.hpp"
#include "icda/rng.hpp"

namespace icda {

// log(sum_i exp(v_i)) with max subtraction so large logits cannot overflow.
double log_sum_exp(const double* v, std::size_t n);
inline double log_sum_exp(const Vec& v) { return log_sum_exp(v.data(), v.size()); }

// Writes softmax(v) into out (may alias v). Entries of -inf map to 0.
void softmax(const double* v, std::size_t n, double* out);
Vec softmax(const Vec& v);

// Cosine similarity clamped to [-1, 1]. Either vector with norm below 1e-12
// is treated as directionless and yields 0.
double cosine(const double* a, const double* b, std::size_t n);
inline double cosine(const Vec& a, const Vec& b) {
    ICDA_REQUIRE(a.size() == b.size(), "cosine: length mismatch");
    return cosine(a.data(), b.data(), a.size());
}

// Lower-triangular L with L L^T = m + j*I, where j starts at `jitter` and on
// failure escalates through 1e-8, 1e-7, ..., 1e-4 before giving up. The input
// must be square and symmetric to 1e-10. Throws SingularMatrixError when even
// the largest jitter fails.
Matrix cholesky_psd(const Matrix& m, double jitter = 0.0);

// One draw from N(mean, cov) as mean + L z with z standard normal from `rng`.
// An all-zero covariance returns the mean exactly (no jitter noise injected).
Vec sample_mvn(const Vec& mean, const Matrix& cov, Rng& rng);

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Returns eigenvalues (ascending) and the matrix whose COLUMNS are the
// corresponding eigenvectors.
struct EigenDecomposition {
    Vec values;
    Matrix vectors;
};
EigenDecomposition sym_eigen(const Matrix& m);

// Nearest PSD projection used after gradient updates to covariance matrices:
// symmetrize, then clamp negative eigenvalues to zero.
Matrix psd_clamp(const Matrix& m);

}  // namespace icda
