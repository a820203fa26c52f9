#pragma once

#include <cmath>
#include <vector>

#include "icda/linalg.hpp"
#include "icda/model.hpp"
#include "icda/rng.hpp"
#include "icda/stats.hpp"
#include "icda/strength.hpp"

namespace testutil {

using icda::Matrix;
using icda::Vec;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, icda::Rng& rng,
                            double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& x : m.data) x = scale * rng.normal();
    return m;
}

inline Vec random_vec(std::size_t n, icda::Rng& rng, double scale = 1.0) {
    Vec v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

inline icda::LinearHead random_head(int classes, int h_dim, icda::Rng& rng,
                                    double scale = 1.0) {
    icda::LinearHead head;
    head.w = random_matrix(static_cast<std::size_t>(classes),
                           static_cast<std::size_t>(h_dim), rng, scale);
    head.b = random_vec(static_cast<std::size_t>(classes), rng, scale);
    return head;
}

inline std::vector<int> random_labels(std::size_t n, int classes, icda::Rng& rng) {
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes)));
    return y;
}

// Labels covering every class at least once (stats consumers often need that).
inline std::vector<int> covering_labels(std::size_t n, int classes, icda::Rng& rng) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = i < static_cast<std::size_t>(classes)
                   ? static_cast<int>(i)
                   : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes)));
    icda::shuffle(y, rng);
    return y;
}

inline icda::ClassStats stats_from(const Matrix& features, const std::vector<int>& labels,
                                   int classes, icda::CovMode mode) {
    icda::ClassStats s(classes, static_cast<int>(features.cols), mode);
    s.update(features, labels);
    return s;
}

// Population (divide-by-m) moments computed in one pass, the reference the
// streaming implementation is checked against.
inline Vec pooled_mean(const Matrix& features, const std::vector<int>& labels, int cls) {
    Vec mu(features.cols, 0.0);
    double n = 0.0;
    for (std::size_t i = 0; i < features.rows; ++i) {
        if (labels[i] != cls) continue;
        icda::axpy(1.0, features.row(i), mu.data(), features.cols);
        n += 1.0;
    }
    if (n > 0.0)
        for (double& x : mu) x /= n;
    return mu;
}

inline Matrix pooled_cov(const Matrix& features, const std::vector<int>& labels, int cls) {
    const std::size_t h = features.cols;
    Vec mu = pooled_mean(features, labels, cls);
    Matrix cov(h, h);
    double n = 0.0;
    Vec d(h);
    for (std::size_t i = 0; i < features.rows; ++i) {
        if (labels[i] != cls) continue;
        for (std::size_t a = 0; a < h; ++a) d[a] = features(i, a) - mu[a];
        for (std::size_t a = 0; a < h; ++a) icda::axpy(d[a], d.data(), cov.row(a), h);
        n += 1.0;
    }
    if (n > 0.0)
        for (double& x : cov.data) x /= n;
    return cov;
}

inline double rel_err(double analytic, double numeric, double floor = 1e-8) {
    double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

inline double max_abs(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace testutil
