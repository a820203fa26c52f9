#include <cmath>
#include <limits>

#include "doctest.h"

#include "icda/check.hpp"
#include "icda/numerics.hpp"
#include "test_helpers.hpp"

using icda::Matrix;
using icda::Rng;
using icda::Vec;

namespace {

// independent reference in extended precision
double naive_lse(const Vec& v) {
    long double s = 0.0L;
    for (double x : v) s += expl(static_cast<long double>(x));
    return static_cast<double>(logl(s));
}

Matrix random_psd(std::size_t n, Rng& rng, double ridge = 0.0) {
    Matrix b = testutil::random_matrix(n, n, rng);
    Matrix a = icda::matmul(b, icda::transpose(b));
    for (std::size_t i = 0; i < n; ++i) a(i, i) += ridge;
    return a;
}

}  // namespace

TEST_CASE("log_sum_exp matches an extended-precision reference") {
    Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        Vec v = testutil::random_vec(1 + rng.next_below(9), rng, 3.0);
        CHECK(testutil::rel_err(icda::log_sum_exp(v), naive_lse(v)) < 1e-12);
    }
}

TEST_CASE("log_sum_exp handles extremes") {
    CHECK(icda::log_sum_exp(Vec{4.25}) == doctest::Approx(4.25).epsilon(1e-15));
    // no overflow: exp(1000) would be inf without max subtraction
    CHECK(icda::log_sum_exp(Vec{1000.0, 0.0}) == doctest::Approx(1000.0));
    CHECK(std::isfinite(icda::log_sum_exp(Vec{-1000.0, -1000.0})));
    // -inf entries contribute nothing
    const double ninf = -std::numeric_limits<double>::infinity();
    CHECK(icda::log_sum_exp(Vec{0.0, ninf}) == doctest::Approx(0.0));

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Vec v = testutil::random_vec(6, rng, 2.0);
        double mx = *std::max_element(v.begin(), v.end());
        double lse = icda::log_sum_exp(v);
        CHECK(lse >= mx);
        CHECK(lse <= mx + std::log(6.0) + 1e-12);
    }
}

TEST_CASE("softmax sums to one and maps -inf to zero") {
    Rng rng(7);
    Vec v = testutil::random_vec(5, rng, 4.0);
    Vec q = icda::softmax(v);
    double s = 0.0;
    for (double x : q) {
        CHECK(x >= 0.0);
        s += x;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

    const double ninf = -std::numeric_limits<double>::infinity();
    Vec q2 = icda::softmax(Vec{ninf, 0.0, 0.0});
    CHECK(q2[0] == 0.0);
    CHECK(q2[1] == doctest::Approx(0.5));

    // invariant under a constant shift
    Vec shifted = v;
    for (double& x : shifted) x += 123.0;
    Vec qs = icda::softmax(shifted);
    CHECK(icda::max_abs_diff(q, qs) < 1e-12);
}

TEST_CASE("cosine geometry") {
    Vec a{1.0, 0.0}, b{2.0, 0.0}, c{0.0, 3.0}, d{-1.0, 0.0};
    CHECK(icda::cosine(a, b) == doctest::Approx(1.0));
    CHECK(icda::cosine(a, c) == doctest::Approx(0.0));
    CHECK(icda::cosine(a, d) == doctest::Approx(-1.0));

    // always inside [-1, 1] even with rounding pressure
    Rng rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        Vec u = testutil::random_vec(4, rng);
        Vec w = u;
        for (double& x : w) x *= 1e-7;
        double cs = icda::cosine(u, w);
        CHECK(cs <= 1.0);
        CHECK(cs >= -1.0);
    }

    // degenerate norms are directionless
    Vec zero{0.0, 0.0};
    Vec tiny{1e-13, 0.0};
    CHECK(icda::cosine(zero, a) == 0.0);
    CHECK(icda::cosine(tiny, a) == 0.0);
}

TEST_CASE("cholesky_psd reconstructs well-conditioned matrices") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 2 + rng.next_below(5);
        Matrix a = random_psd(n, rng, 0.5);
        Matrix l = icda::cholesky_psd(a);
        Matrix back = icda::matmul(l, icda::transpose(l));
        CHECK(icda::max_abs_diff(a, back) < 1e-9);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) CHECK(l(i, j) == 0.0);
    }
}

TEST_CASE("cholesky_psd jitters rank-deficient inputs instead of failing") {
    Vec v{1.0, 2.0, -1.0};
    Matrix a(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) a(i, j) = v[i] * v[j];
    Matrix l = icda::cholesky_psd(a);
    Matrix back = icda::matmul(l, icda::transpose(l));
    // reconstruction differs from the input only by the diagonal jitter
    CHECK(icda::max_abs_diff(a, back) < 2e-4);
}

TEST_CASE("cholesky_psd rejects indefinite and malformed inputs") {
    Matrix neg(2, 2);
    neg(0, 0) = 1.0;
    neg(1, 1) = -1.0;
    CHECK_THROWS_AS((void)icda::cholesky_psd(neg), icda::SingularMatrixError);

    Matrix asym(2, 2);
    asym(0, 1) = 1.0;  // not symmetric
    CHECK_THROWS_AS((void)icda::cholesky_psd(asym), icda::ContractViolation);

    Matrix rect(2, 3);
    CHECK_THROWS_AS((void)icda::cholesky_psd(rect), icda::ContractViolation);
}

TEST_CASE("sample_mvn with zero covariance returns the mean bit-exactly") {
    Rng rng(31);
    Vec mean = testutil::random_vec(4, rng);
    Matrix cov(4, 4);
    Vec draw = icda::sample_mvn(mean, cov, rng);
    for (std::size_t i = 0; i < 4; ++i) CHECK(draw[i] == mean[i]);
}

TEST_CASE("sample_mvn matches requested moments") {
    Rng rng(37);
    Vec mean{1.0, -2.0};
    Matrix cov(2, 2);
    cov(0, 0) = 2.0;
    cov(0, 1) = cov(1, 0) = 0.6;
    cov(1, 1) = 1.0;

    const int n = 40000;
    double m0 = 0.0, m1 = 0.0, c00 = 0.0, c01 = 0.0, c11 = 0.0;
    for (int i = 0; i < n; ++i) {
        Vec d = icda::sample_mvn(mean, cov, rng);
        m0 += d[0];
        m1 += d[1];
        c00 += (d[0] - mean[0]) * (d[0] - mean[0]);
        c01 += (d[0] - mean[0]) * (d[1] - mean[1]);
        c11 += (d[1] - mean[1]) * (d[1] - mean[1]);
    }
    CHECK(std::abs(m0 / n - 1.0) < 0.05);
    CHECK(std::abs(m1 / n + 2.0) < 0.05);
    CHECK(std::abs(c00 / n - 2.0) < 0.1);
    CHECK(std::abs(c01 / n - 0.6) < 0.1);
    CHECK(std::abs(c11 / n - 1.0) < 0.1);

    Rng r1(7), r2(7);
    Vec a = icda::sample_mvn(mean, cov, r1);
    Vec b = icda::sample_mvn(mean, cov, r2);
    CHECK(icda::max_abs_diff(a, b) == 0.0);
}

TEST_CASE("sym_eigen solves a known 2x2 and reconstructs random inputs") {
    Matrix a(2, 2);
    a(0, 0) = a(1, 1) = 2.0;
    a(0, 1) = a(1, 0) = 1.0;
    icda::EigenDecomposition ed = icda::sym_eigen(a);
    CHECK(ed.values[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(ed.values[1] == doctest::Approx(3.0).epsilon(1e-10));

    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t n = 2 + rng.next_below(5);
        Matrix m = testutil::random_matrix(n, n, rng);
        Matrix sym(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) sym(i, j) = 0.5 * (m(i, j) + m(j, i));

        icda::EigenDecomposition e = icda::sym_eigen(sym);
        for (std::size_t i = 0; i + 1 < n; ++i) CHECK(e.values[i] <= e.values[i + 1] + 1e-12);

        // V diag(d) V^T = input, and V^T V = I
        Matrix vd = e.vectors;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) vd(i, j) *= e.values[j];
        Matrix back = icda::matmul(vd, icda::transpose(e.vectors));
        CHECK(icda::max_abs_diff(sym, back) < 1e-9);

        Matrix gram = icda::matmul(icda::transpose(e.vectors), e.vectors);
        for (std::size_t i = 0; i < n; ++i) gram(i, i) -= 1.0;
        double off = 0.0;
        for (double x : gram.data) off = std::max(off, std::abs(x));
        CHECK(off < 1e-10);
    }
}

TEST_CASE("psd_clamp zeroes negative eigenvalues and keeps PSD inputs") {
    Matrix ind(2, 2);
    ind(0, 0) = 1.0;
    ind(1, 1) = -2.0;
    Matrix clamped = icda::psd_clamp(ind);
    icda::EigenDecomposition e = icda::sym_eigen(clamped);
    for (double v : e.values) CHECK(v >= -1e-12);
    CHECK(clamped(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(clamped(1, 1) == doctest::Approx(0.0).epsilon(1e-10));

    Rng rng(43);
    Matrix b = testutil::random_matrix(3, 3, rng);
    Matrix psd = icda::matmul(b, icda::transpose(b));
    Matrix kept = icda::psd_clamp(psd);
    CHECK(icda::max_abs_diff(psd, kept) < 1e-9);

    // asymmetric input gets symmetrized first
    Matrix asym(2, 2);
    asym(0, 0) = asym(1, 1) = 2.0;
    asym(0, 1) = 1.0;
    asym(1, 0) = 0.0;
    Matrix s = icda::psd_clamp(asym);
    CHECK(s(0, 1) == doctest::Approx(s(1, 0)));
    CHECK(s(0, 1) == doctest::Approx(0.5).epsilon(1e-10));
}
