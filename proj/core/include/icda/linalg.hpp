#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "icda/check.hpp"

namespace icda {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Deliberately minimal: the kernels this
// project needs are written as explicit loops where they are used, which keeps
// operation order (and therefore bitwise reproducibility) in plain sight.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double dot(const Vec& a, const Vec& b) {
    ICDA_REQUIRE(a.size() == b.size(), "dot: length mismatch");
    return dot(a.data(), b.data(), a.size());
}

inline double norm2(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

inline double norm2(const Vec& a) { return norm2(a.data(), a.size()); }

// y += alpha * x
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// out = M v
inline Vec matvec(const Matrix& m, const Vec& v) {
    ICDA_REQUIRE(m.cols == v.size(), "matvec: shape mismatch");
    Vec out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) out[i] = dot(m.row(i), v.data(), m.cols);
    return out;
}

// out = M^T v
inline Vec matvec_t(const Matrix& m, const Vec& v) {
    ICDA_REQUIRE(m.rows == v.size(), "matvec_t: shape mismatch");
    Vec out(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) axpy(v[i], m.row(i), out.data(), m.cols);
    return out;
}

// C = A B, plain triple loop.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    ICDA_REQUIRE(a.cols == b.rows, "matmul: shape mismatch");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            axpy(aik, b.row(k), c.row(i), b.cols);
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    ICDA_REQUIRE(a.same_shape(b), "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
    ICDA_REQUIRE(a.size() == b.size(), "max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace icda
