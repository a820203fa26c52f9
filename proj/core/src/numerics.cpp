#include "icda/numerics.hpp"

#include <cmath>
#include <limits>

namespace icda {

double log_sum_exp(const double* v, std::size_t n) {
    ICDA_REQUIRE(n > 0, "log_sum_exp: empty input");
    double m = v[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, v[i]);
    if (!std::isfinite(m)) {
        // All entries -inf: the sum is 0, its log is -inf.
        if (m == -std::numeric_limits<double>::infinity()) return m;
        ICDA_REQUIRE(false, "log_sum_exp: non-finite input");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

void softmax(const double* v, std::size_t n, double* out) {
    double lse = log_sum_exp(v, n);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(v[i] - lse);
}

Vec softmax(const Vec& v) {
    Vec out(v.size());
    softmax(v.data(), v.size(), out.data());
    return out;
}

double cosine(const double* a, const double* b, std::size_t n) {
    double na = norm2(a, n);
    double nb = norm2(b, n);
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    double c = dot(a, b, n) / (na * nb);
    return std::min(1.0, std::max(-1.0, c));
}

namespace {

// Plain Cholesky on m + jitter*I. Fails (returns false) on a non-positive or
// non-finite pivot instead of throwing, so the caller can escalate jitter.
bool try_cholesky(const Matrix& m, double jitter, Matrix& l) {
    std::size_t n = m.rows;
    l = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j) + jitter;
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return true;
}

}  // namespace

Matrix cholesky_psd(const Matrix& m, double jitter) {
    ICDA_REQUIRE(m.rows == m.cols, "cholesky_psd: matrix not square");
    ICDA_REQUIRE(m.rows > 0, "cholesky_psd: empty matrix");
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j)
            ICDA_REQUIRE(std::abs(m(i, j) - m(j, i)) <= 1e-10,
                         "cholesky_psd: matrix not symmetric");

    Matrix l;
    if (try_cholesky(m, jitter, l)) return l;
    for (double j = 1e-8; j <= 1.0000001e-4; j *= 10.0) {
        if (j <= jitter) continue;
        if (try_cholesky(m, j, l)) return l;
    }
    throw SingularMatrixError("cholesky_psd: factorization failed at jitter 1e-4");
}

Vec sample_mvn(const Vec& mean, const Matrix& cov, Rng& rng) {
    std::size_t n = mean.size();
    ICDA_REQUIRE(cov.rows == n && cov.cols == n, "sample_mvn: shape mismatch");
    bool all_zero = true;
    for (double v : cov.data) {
        if (v != 0.0) {
            all_zero = false;
            break;
        }
    }
    if (all_zero) return mean;

    Matrix l = cholesky_psd(cov);
    Vec z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = rng.normal();
    Vec out = mean;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k <= i; ++k) s += l(i, k) * z[k];
        out[i] += s;
    }
    return out;
}

EigenDecomposition sym_eigen(const Matrix& m) {
    ICDA_REQUIRE(m.rows == m.cols, "sym_eigen: matrix not square");
    std::size_t n = m.rows;
    Matrix a = m;
    // Work on the symmetrized copy so tiny asymmetries cannot stall rotation.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            double v = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = v;
            a(j, i) = v;
        }
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    double scale = 0.0;
    for (double x : a.data) scale = std::max(scale, std::abs(x));
    double tol = std::max(scale, 1.0) * 1e-14;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(a(p, q)));
        if (off <= tol) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a(p, q);
                if (std::abs(apq) <= tol) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    // Sort eigenpairs ascending by eigenvalue.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    EigenDecomposition out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

Matrix psd_clamp(const Matrix& m) {
    ICDA_REQUIRE(m.rows == m.cols, "psd_clamp: matrix not square");
    std::size_t n = m.rows;
    Matrix sym(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sym(i, j) = 0.5 * (m(i, j) + m(j, i));
    EigenDecomposition eig = sym_eigen(sym);
    bool any_negative = false;
    for (double& lam : eig.values) {
        if (lam < 0.0) {
            lam = 0.0;
            any_negative = true;
        }
    }
    if (!any_negative) return sym;
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                s += eig.vectors(i, k) * eig.values[k] * eig.vectors(j, k);
            out(i, j) = s;
        }
    // Re-symmetrize against roundoff from the reconstruction.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            double v = 0.5 * (out(i, j) + out(j, i));
            out(i, j) = v;
            out(j, i) = v;
        }
    return out;
}

}  // namespace icda
