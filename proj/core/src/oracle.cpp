#include "icda/oracle.hpp"

#include <cmath>

#include "icda/numerics.hpp"

namespace icda {

namespace {

// lambda * (Sigma_y + alpha*Sigma_c) as a dense matrix, in either stats mode.
Matrix augmentation_cov(const ClassStats& stats, int y, int c, double alpha, double lambda) {
    std::size_t h = static_cast<std::size_t>(stats.feature_dim());
    Matrix cov(h, h);
    if (stats.mode() == CovMode::full) {
        const Matrix& sy = stats.cov(y);
        const Matrix& sc = stats.cov(c);
        for (std::size_t k = 0; k < cov.data.size(); ++k)
            cov.data[k] = lambda * (sy.data[k] + alpha * sc.data[k]);
    } else {
        const Vec& vy = stats.var(y);
        const Vec& vc = stats.var(c);
        for (std::size_t a = 0; a < h; ++a) cov(a, a) = lambda * (vy[a] + alpha * vc[a]);
    }
    return cov;
}

}  // namespace

Vec sample_augmented(const Vec& h, int y, int c, double alpha, double lambda,
                     const ClassStats& stats, Rng& rng) {
    ICDA_REQUIRE(c != y, "sample_augmented: target class equals label");
    ICDA_REQUIRE(alpha >= 0.0 && lambda >= 0.0, "sample_augmented: negative alpha or lambda");
    ICDA_REQUIRE(h.size() == static_cast<std::size_t>(stats.feature_dim()),
                 "sample_augmented: feature dim mismatch");
    if (lambda == 0.0) return h;

    Vec mean = h;
    axpy(lambda * alpha, stats.mean(c).data(), mean.data(), mean.size());
    Matrix cov = augmentation_cov(stats, y, c, alpha, lambda);
    return sample_mvn(mean, cov, rng);
}

McResult mc_expected_loss(const Matrix& features, const std::vector<int>& labels,
                          const LinearHead& head, const ClassStats& stats,
                          const StrengthMatrix& strengths, double lambda, int m_per_pair,
                          const Vec& priors, Rng& rng) {
    std::size_t n = features.rows;
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(m_per_pair >= 1, "mc_expected_loss: need at least one draw per pair");
    ICDA_REQUIRE(priors.size() == classes, "mc_expected_loss: prior count mismatch");

    double weighted_sum = 0.0;
    double weight_total = 0.0;
    double var_sum = 0.0;  // sum of w^2 * Var[mean_ic]
    Vec z(h_dim), h_draw(h_dim), logits(classes);
    for (std::size_t i = 0; i < n; ++i) {
        int y = labels[i];
        const double* h = features.row(i);
        for (std::size_t c = 0; c < classes; ++c) {
            if (static_cast<int>(c) == y) continue;
            double alpha = strengths.alpha(i, c);
            if (alpha <= 0.0) continue;
            ICDA_REQUIRE(priors[static_cast<std::size_t>(y)] > 0.0,
                         "mc_expected_loss: zero prior for a present class");
            double w = alpha / priors[static_cast<std::size_t>(y)];

            Vec mean(h, h + h_dim);
            bool degenerate = lambda == 0.0;
            Matrix chol;
            if (!degenerate) {
                axpy(lambda * alpha, stats.mean(static_cast<int>(c)).data(), mean.data(),
                     h_dim);
                Matrix cov = augmentation_cov(stats, y, static_cast<int>(c), alpha, lambda);
                bool all_zero = true;
                for (double v : cov.data)
                    if (v != 0.0) {
                        all_zero = false;
                        break;
                    }
                if (all_zero)
                    degenerate = true;
                else
                    chol = cholesky_psd(cov);
            }

            // Welford accumulation of the per-pair CE mean and variance.
            double mean_acc = 0.0, m2_acc = 0.0;
            int draws = degenerate ? 1 : m_per_pair;
            for (int d = 0; d < draws; ++d) {
                if (degenerate) {
                    h_draw = mean;
                } else {
                    for (std::size_t a = 0; a < h_dim; ++a) z[a] = rng.normal();
                    h_draw = mean;
                    for (std::size_t a = 0; a < h_dim; ++a) {
                        double s = 0.0;
                        for (std::size_t k = 0; k <= a; ++k) s += chol(a, k) * z[k];
                        h_draw[a] += s;
                    }
                }
                for (std::size_t j = 0; j < classes; ++j)
                    logits[j] = dot(head.w.row(j), h_draw.data(), h_dim) + head.b[j];
                double ell = log_sum_exp(logits) - logits[static_cast<std::size_t>(y)];
                double delta = ell - mean_acc;
                mean_acc += delta / static_cast<double>(d + 1);
                m2_acc += delta * (ell - mean_acc);
            }
            double var_of_mean =
                draws < 2 ? 0.0
                          : m2_acc / static_cast<double>(draws - 1) / static_cast<double>(draws);

            weighted_sum += w * mean_acc;
            weight_total += w;
            var_sum += w * w * var_of_mean;
        }
    }

    McResult out;
    out.total_weight = weight_total;
    if (weight_total > 0.0) {
        out.estimate = weighted_sum / weight_total;
        out.se = std::sqrt(var_sum) / weight_total;
    }
    return out;
}

double surrogate_upper_bound(const Matrix& features, const std::vector<int>& labels,
                             const LinearHead& head, const ClassStats& stats,
                             const StrengthMatrix& strengths, double lambda,
                             const Vec& priors) {
    std::size_t n = features.rows;
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(priors.size() == classes, "surrogate_upper_bound: prior count mismatch");

    double weighted_sum = 0.0;
    double weight_total = 0.0;
    Vec dw(h_dim), v(h_dim), logits(classes), terms(classes);
    Matrix mix_full;
    Vec mix_diag;
    for (std::size_t i = 0; i < n; ++i) {
        int y = labels[i];
        const double* h = features.row(i);
        for (std::size_t j = 0; j < classes; ++j)
            logits[j] = dot(head.w.row(j), h, h_dim) + head.b[j];

        for (std::size_t c = 0; c < classes; ++c) {
            if (static_cast<int>(c) == y) continue;
            double alpha = strengths.alpha(i, c);
            if (alpha <= 0.0) continue;
            double w = alpha / priors[static_cast<std::size_t>(y)];

            // The mixed covariance Sigma_y + alpha*Sigma_c is shared by every
            // candidate class j of this pair.
            if (lambda != 0.0) {
                if (stats.mode() == CovMode::full) {
                    mix_full = stats.cov(y);
                    axpy(alpha, stats.cov(static_cast<int>(c)).data.data(),
                         mix_full.data.data(), mix_full.data.size());
                } else {
                    mix_diag = stats.var(y);
                    axpy(alpha, stats.var(static_cast<int>(c)).data(), mix_diag.data(),
                         h_dim);
                }
            }
            const Vec& mu = stats.mean(static_cast<int>(c));

            // log(1 + sum_{j != y} exp[f_j - f_y + (lambda/2) P_j + lambda Q_j])
            // via log_sum_exp with the 0 slot standing in for j = y.
            std::size_t count = 0;
            terms[count++] = 0.0;
            for (std::size_t j = 0; j < classes; ++j) {
                if (static_cast<int>(j) == y) continue;
                double shift = 0.0;
                if (lambda != 0.0) {
                    for (std::size_t a = 0; a < h_dim; ++a)
                        dw[a] = head.w(j, a) - head.w(static_cast<std::size_t>(y), a);
                    if (stats.mode() == CovMode::full) {
                        for (std::size_t a = 0; a < h_dim; ++a)
                            v[a] = dot(mix_full.row(a), dw.data(), h_dim);
                    } else {
                        for (std::size_t a = 0; a < h_dim; ++a) v[a] = mix_diag[a] * dw[a];
                    }
                    double p = dot(dw, v);
                    double q = alpha * dot(dw, mu);
                    shift = 0.5 * lambda * p + lambda * q;
                }
                terms[count++] = logits[j] - logits[static_cast<std::size_t>(y)] + shift;
            }
            weighted_sum += w * log_sum_exp(terms.data(), count);
            weight_total += w;
        }
    }
    return weight_total > 0.0 ? weighted_sum / weight_total : 0.0;
}

}  // namespace icda
