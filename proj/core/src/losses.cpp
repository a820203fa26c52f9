#include "icda/losses.hpp"

#include <cmath>
#include <limits>

#include "icda/numerics.hpp"

namespace icda {

double lambda_at(int t, int total, double lambda0) {
    ICDA_REQUIRE(total > 0, "lambda_at: total iterations must be positive");
    ICDA_REQUIRE(t >= 0 && t <= total, "lambda_at: t out of range");
    ICDA_REQUIRE(lambda0 >= 0.0, "lambda_at: lambda0 must be nonnegative");
    return static_cast<double>(t) / static_cast<double>(total) * lambda0;
}

LogitLoss perturbed_ce(const Matrix& logits, const std::vector<int>& labels,
                       const Matrix& delta_u) {
    std::size_t n = logits.rows;
    std::size_t classes = logits.cols;
    ICDA_REQUIRE(labels.size() == n, "perturbed_ce: label count mismatch");
    ICDA_REQUIRE(delta_u.rows == n && delta_u.cols == classes,
                 "perturbed_ce: delta_u shape mismatch");
    ICDA_REQUIRE(n > 0, "perturbed_ce: empty batch");

    LogitLoss out;
    out.d_logits = Matrix(n, classes);
    out.q = Matrix(n, classes);
    double inv_n = 1.0 / static_cast<double>(n);
    Vec z(classes);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* u = logits.row(i);
        const double* du = delta_u.row(i);
        std::size_t y = static_cast<std::size_t>(labels[i]);
        ICDA_REQUIRE(y < classes, "perturbed_ce: label out of range");
        for (std::size_t c = 0; c < classes; ++c) z[c] = u[c] + du[c];
        ICDA_REQUIRE(std::isfinite(z[y]), "perturbed_ce: non-finite target logit");
        double lse = log_sum_exp(z);
        total += lse - z[y];
        double* qi = out.q.row(i);
        double* di = out.d_logits.row(i);
        for (std::size_t c = 0; c < classes; ++c) {
            qi[c] = std::exp(z[c] - lse);
            di[c] = (qi[c] - (c == y ? 1.0 : 0.0)) * inv_n;
        }
    }
    out.loss = total * inv_n;
    return out;
}

LogitLoss ce_loss(const Matrix& logits, const std::vector<int>& labels) {
    Matrix zero(logits.rows, logits.cols);
    return perturbed_ce(logits, labels, zero);
}

LogitLoss la_loss(const Matrix& logits, const std::vector<int>& labels, const Vec& priors) {
    std::size_t classes = logits.cols;
    ICDA_REQUIRE(priors.size() == classes, "la_loss: prior count mismatch");
    Vec lp(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        ICDA_REQUIRE(priors[c] > 0.0, "la_loss: zero prior");
        lp[c] = std::log(priors[c]);
    }
    Matrix delta(logits.rows, classes);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        std::size_t y = static_cast<std::size_t>(labels[i]);
        double* row = delta.row(i);
        for (std::size_t c = 0; c < classes; ++c) row[c] = lp[c] - lp[y];
    }
    return perturbed_ce(logits, labels, delta);
}

HeadGrads accumulate_logit_grads(const Matrix& d_logits, const Matrix& features,
                                 const LinearHead& head) {
    std::size_t n = d_logits.rows;
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(features.rows == n && features.cols == h_dim,
                 "accumulate_logit_grads: feature shape mismatch");
    ICDA_REQUIRE(d_logits.cols == classes, "accumulate_logit_grads: class count mismatch");

    HeadGrads g;
    g.d_w = Matrix(classes, h_dim);
    g.d_b = Vec(classes, 0.0);
    g.d_features = Matrix(n, h_dim);
    for (std::size_t i = 0; i < n; ++i) {
        const double* gi = d_logits.row(i);
        const double* h = features.row(i);
        double* df = g.d_features.row(i);
        for (std::size_t c = 0; c < classes; ++c) {
            if (gi[c] == 0.0) continue;
            axpy(gi[c], h, g.d_w.row(c), h_dim);
            g.d_b[c] += gi[c];
            axpy(gi[c], head.w.row(c), df, h_dim);
        }
    }
    return g;
}

namespace {

// logits = features w^T + b, computed locally so the feature-space losses do
// not depend on a ForwardCache.
Matrix head_logits(const Matrix& features, const LinearHead& head) {
    std::size_t n = features.rows;
    Matrix logits(n, head.w.rows);
    for (std::size_t i = 0; i < n; ++i) {
        const double* h = features.row(i);
        double* u = logits.row(i);
        for (std::size_t c = 0; c < head.w.rows; ++c)
            u[c] = dot(head.w.row(c), h, head.w.cols) + head.b[c];
    }
    return logits;
}

Vec log_priors_of(const Vec& priors) {
    Vec lp(priors.size());
    for (std::size_t c = 0; c < priors.size(); ++c) {
        ICDA_REQUIRE(priors[c] >= 0.0, "priors must be nonnegative");
        lp[c] = priors[c] > 0.0 ? std::log(priors[c])
                                : -std::numeric_limits<double>::infinity();
    }
    return lp;
}

// dw = w_c - w_y into buf.
void class_diff(const LinearHead& head, std::size_t c, std::size_t y, Vec& buf) {
    const double* wc = head.w.row(c);
    const double* wy = head.w.row(y);
    for (std::size_t k = 0; k < head.w.cols; ++k) buf[k] = wc[k] - wy[k];
}

}  // namespace

FeatureLoss isda_loss(const Matrix& features, const std::vector<int>& labels,
                      const LinearHead& head, const ClassStats& stats, double lambda) {
    std::size_t n = features.rows;
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(lambda >= 0.0, "isda_loss: lambda must be nonnegative");
    ICDA_REQUIRE(static_cast<std::size_t>(stats.feature_dim()) == h_dim,
                 "isda_loss: stats dim mismatch");

    Matrix delta_u(n, classes);
    // gvec rows hold d(pert)/d(w_c) = lambda * Sigma_y dw, reused after the
    // softmax is known.
    Matrix gvec(lambda != 0.0 ? n * classes : 0, h_dim);
    Vec dw(h_dim), v(h_dim);
    if (lambda != 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t y = static_cast<std::size_t>(labels[i]);
            ICDA_REQUIRE(stats.count(static_cast<int>(y)) > 0.0,
                         "isda_loss: no statistics for a present class");
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y) continue;
                class_diff(head, c, y, dw);
                double p;
                if (stats.mode() == CovMode::full) {
                    const Matrix& cov = stats.cov(static_cast<int>(y));
                    for (std::size_t a = 0; a < h_dim; ++a) v[a] = dot(cov.row(a), dw.data(), h_dim);
                } else {
                    const Vec& var = stats.var(static_cast<int>(y));
                    for (std::size_t a = 0; a < h_dim; ++a) v[a] = var[a] * dw[a];
                }
                p = dot(dw, v);
                delta_u(i, c) = 0.5 * lambda * p;
                double* g = gvec.row(i * classes + c);
                for (std::size_t a = 0; a < h_dim; ++a) g[a] = lambda * v[a];
            }
        }
    }

    Matrix logits = head_logits(features, head);
    LogitLoss kernel = perturbed_ce(logits, labels, delta_u);
    HeadGrads base = accumulate_logit_grads(kernel.d_logits, features, head);

    FeatureLoss out;
    out.loss = kernel.loss;
    out.q = std::move(kernel.q);
    out.d_features = std::move(base.d_features);
    out.d_w = std::move(base.d_w);
    out.d_b = std::move(base.d_b);
    if (lambda != 0.0) {
        double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t y = static_cast<std::size_t>(labels[i]);
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y) continue;
                double coef = out.q(i, c) * inv_n;
                if (coef == 0.0) continue;
                const double* g = gvec.row(i * classes + c);
                axpy(coef, g, out.d_w.row(c), h_dim);
                axpy(-coef, g, out.d_w.row(y), h_dim);
            }
        }
    }
    return out;
}

FeatureLoss risda_loss(const Matrix& features, const std::vector<int>& labels,
                       const LinearHead& head, const ClassStats& stats,
                       const ConfusionRates& confusion, double alpha_r, double beta_r) {
    std::size_t n = features.rows;
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(confusion.classes() == static_cast<int>(classes),
                 "risda_loss: confusion size mismatch");
    ICDA_REQUIRE(static_cast<std::size_t>(stats.feature_dim()) == h_dim,
                 "risda_loss: stats dim mismatch");

    // Class-wise blended mean m_y and covariance S_y, built once per class
    // present in the batch.
    std::vector<bool> present(classes, false);
    for (int y : labels) present[static_cast<std::size_t>(y)] = true;
    std::vector<Vec> m_of(classes);
    std::vector<Matrix> s_full(classes);
    std::vector<Vec> s_diag(classes);
    for (std::size_t y = 0; y < classes; ++y) {
        if (!present[y]) continue;
        Vec m(h_dim, 0.0);
        for (std::size_t c = 0; c < classes; ++c) {
            if (c == y) continue;
            double eps = confusion.rate(static_cast<int>(y), static_cast<int>(c));
            if (eps != 0.0) axpy(eps, stats.mean(static_cast<int>(c)).data(), m.data(), h_dim);
        }
        m_of[y] = std::move(m);
        if (stats.mode() == CovMode::full) {
            Matrix s = stats.cov(static_cast<int>(y));
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y) continue;
                double eps = confusion.rate(static_cast<int>(y), static_cast<int>(c));
                if (eps != 0.0)
                    axpy(eps, stats.cov(static_cast<int>(c)).data.data(), s.data.data(),
                         s.data.size());
            }
            s_full[y] = std::move(s);
        } else {
            Vec s = stats.var(static_cast<int>(y));
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y) continue;
                double eps = confusion.rate(static_cast<int>(y), static_cast<int>(c));
                if (eps != 0.0) axpy(eps, stats.var(static_cast<int>(c)).data(), s.data(), h_dim);
            }
            s_diag[y] = std::move(s);
        }
    }

    Matrix delta_u(n, classes);
    Matrix gvec(n * classes, h_dim);
    Vec dw(h_dim), v(h_dim);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t y = static_cast<std::size_t>(labels[i]);
        for (std::size_t c = 0; c < classes; ++c) {
            if (c == y) continue;
            class_diff(head, c, y, dw);
            if (stats.mode() == CovMode::full) {
                const Matrix& s = s_full[y];
                for (std::size_t a = 0; a < h_dim; ++a) v[a] = dot(s.row(a), dw.data(), h_dim);
            } else {
                const Vec& s = s_diag[y];
                for (std::size_t a = 0; a < h_dim; ++a) v[a] = s[a] * dw[a];
            }
            double quad = dot(dw, v);
            double lin = dot(dw, m_of[y]);
            delta_u(i, c) = alpha_r * lin + beta_r * quad;
            double* g = gvec.row(i * classes + c);
            for (std::size_t a = 0; a < h_dim; ++a)
                g[a] = alpha_r * m_of[y][a] + 2.0 * beta_r * v[a];
        }
    }

    Matrix logits = head_logits(features, head);
    LogitLoss kernel = perturbed_ce(logits, labels, delta_u);
    HeadGrads base = accumulate_logit_grads(kernel.d_logits, features, head);

    FeatureLoss out;
    out.loss = kernel.loss;
    out.q = std::move(kernel.q);
    out.d_features = std::move(base.d_features);
    out.d_w = std::move(base.d_w);
    out.d_b = std::move(base.d_b);
    double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t y = static_cast<std::size_t>(labels[i]);
        for (std::size_t c = 0; c < classes; ++c) {
            if (c == y) continue;
            double coef = out.q(i, c) * inv_n;
            if (coef == 0.0) continue;
            const double* g = gvec.row(i * classes + c);
            axpy(coef, g, out.d_w.row(c), h_dim);
            axpy(-coef, g, out.d_w.row(y), h_dim);
        }
    }
    return out;
}

PerturbationTerms icda_perturbations(const Matrix& features, const std::vector<int>& labels,
                                     const LinearHead& head, const ClassStats& stats,
                                     const StrengthMatrix& strengths, double lambda,
                                     double beta, const Vec& priors) {
    std::size_t n = features.rows;
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(strengths.alpha_hat.rows == n && strengths.alpha_hat.cols == classes,
                 "icda_perturbations: strengths shape mismatch");
    ICDA_REQUIRE(strengths.alpha_scalar.size() == n,
                 "icda_perturbations: alpha_scalar length mismatch");
    Vec lp = log_priors_of(priors);

    PerturbationTerms terms;
    terms.p = Matrix(n, classes);
    terms.q_kept = Matrix(n, classes);
    terms.delta = Matrix(n, classes);
    terms.beta_alpha = Vec(n, 0.0);
    terms.phi_hat = Matrix(n, classes);

    Vec dw(h_dim), v(h_dim);
    Matrix sig_mix_full;
    Vec sig_mix_diag;
    if (stats.mode() == CovMode::full)
        sig_mix_full = Matrix(h_dim, h_dim);
    else
        sig_mix_diag = Vec(h_dim, 0.0);

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t y = static_cast<std::size_t>(labels[i]);
        terms.beta_alpha[i] = beta * strengths.alpha_scalar[i];

        // Mixed covariance Sigma_y + sum_{j != y} ahat[i][j] Sigma_j, shared
        // across every non-target class of this sample.
        if (stats.mode() == CovMode::full) {
            sig_mix_full = stats.cov(static_cast<int>(y));
            for (std::size_t j = 0; j < classes; ++j) {
                if (j == y) continue;
                double a = strengths.alpha_hat(i, j);
                if (a != 0.0)
                    axpy(a, stats.cov(static_cast<int>(j)).data.data(),
                         sig_mix_full.data.data(), sig_mix_full.data.size());
            }
        } else {
            sig_mix_diag = stats.var(static_cast<int>(y));
            for (std::size_t j = 0; j < classes; ++j) {
                if (j == y) continue;
                double a = strengths.alpha_hat(i, j);
                if (a != 0.0)
                    axpy(a, stats.var(static_cast<int>(j)).data(), sig_mix_diag.data(), h_dim);
            }
        }

        for (std::size_t c = 0; c < classes; ++c) {
            if (c == y) continue;
            class_diff(head, c, y, dw);
            if (stats.mode() == CovMode::full) {
                for (std::size_t a = 0; a < h_dim; ++a)
                    v[a] = dot(sig_mix_full.row(a), dw.data(), h_dim);
            } else {
                for (std::size_t a = 0; a < h_dim; ++a) v[a] = sig_mix_diag[a] * dw[a];
            }
            terms.p(i, c) = dot(dw, v);
            terms.q_kept(i, c) = strengths.alpha_hat(i, c) *
                                 dot(dw, stats.mean(static_cast<int>(c)));
            terms.delta(i, c) = lp[c] - lp[y];
            terms.phi_hat(i, c) = 0.5 * lambda * terms.p(i, c) + lambda * terms.q_kept(i, c) +
                                  terms.delta(i, c) + terms.beta_alpha[i];
        }
    }
    return terms;
}

IcdaEval icda_eval(const Matrix& features, const std::vector<int>& labels,
                   const LinearHead& head, const ClassStats& stats,
                   const StrengthMatrix& strengths, double lambda, double beta,
                   const Vec& priors, bool keep_meta) {
    std::size_t n = features.rows;
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(lambda >= 0.0 && beta >= 0.0, "icda_eval: negative lambda or beta");
    ICDA_REQUIRE(strengths.alpha_hat.rows == n && strengths.alpha_hat.cols == classes,
                 "icda_eval: strengths shape mismatch");
    ICDA_REQUIRE(strengths.alpha_scalar.size() == n, "icda_eval: alpha_scalar length mismatch");
    ICDA_REQUIRE(priors.size() == classes, "icda_eval: prior count mismatch");
    Vec lp = log_priors_of(priors);

    IcdaEval ev;
    ev.phi = Matrix(n, classes);
    ev.clamped.assign(n * classes, 0);
    bool need_quadratic = lambda != 0.0;
    if (need_quadratic || keep_meta) ev.gvec = Matrix(n * classes, h_dim);
    std::size_t mix_cols = stats.mode() == CovMode::full ? h_dim * h_dim : h_dim;
    if (keep_meta) ev.sig_mix = Matrix(n, mix_cols);

    Vec dw(h_dim), v(h_dim);
    Matrix sig_mix_full(stats.mode() == CovMode::full ? h_dim : 0,
                        stats.mode() == CovMode::full ? h_dim : 0);
    Vec sig_mix_diag(stats.mode() == CovMode::diagonal ? h_dim : 0, 0.0);

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t y = static_cast<std::size_t>(labels[i]);
        ICDA_REQUIRE(y < classes, "icda_eval: label out of range");

        if (need_quadratic) {
            if (stats.mode() == CovMode::full) {
                sig_mix_full = stats.cov(static_cast<int>(y));
                for (std::size_t j = 0; j < classes; ++j) {
                    if (j == y) continue;
                    double a = strengths.alpha_hat(i, j);
                    if (a != 0.0)
                        axpy(a, stats.cov(static_cast<int>(j)).data.data(),
                             sig_mix_full.data.data(), sig_mix_full.data.size());
                }
                if (keep_meta)
                    std::copy(sig_mix_full.data.begin(), sig_mix_full.data.end(),
                              ev.sig_mix.row(i));
            } else {
                sig_mix_diag = stats.var(static_cast<int>(y));
                for (std::size_t j = 0; j < classes; ++j) {
                    if (j == y) continue;
                    double a = strengths.alpha_hat(i, j);
                    if (a != 0.0)
                        axpy(a, stats.var(static_cast<int>(j)).data(), sig_mix_diag.data(),
                             h_dim);
                }
                if (keep_meta)
                    std::copy(sig_mix_diag.begin(), sig_mix_diag.end(), ev.sig_mix.row(i));
            }
        }

        for (std::size_t c = 0; c < classes; ++c) {
            if (c == y) continue;
            double pert = 0.0;
            if (need_quadratic) {
                class_diff(head, c, y, dw);
                if (stats.mode() == CovMode::full) {
                    for (std::size_t a = 0; a < h_dim; ++a)
                        v[a] = dot(sig_mix_full.row(a), dw.data(), h_dim);
                } else {
                    for (std::size_t a = 0; a < h_dim; ++a) v[a] = sig_mix_diag[a] * dw[a];
                }
                double p = dot(dw, v);
                double ahat = strengths.alpha_hat(i, c);
                const Vec& mu = stats.mean(static_cast<int>(c));
                double qk = ahat * dot(dw, mu);
                pert = 0.5 * lambda * p + lambda * qk;
                double* g = ev.gvec.row(i * classes + c);
                for (std::size_t a = 0; a < h_dim; ++a)
                    g[a] = lambda * v[a] + lambda * ahat * mu[a];
            }
            double phi = pert + (lp[c] - lp[y]);
            if (beta != 0.0) phi += beta * strengths.alpha_scalar[i];
            if (phi > kPhiClamp) {
                phi = kPhiClamp;
                ev.clamped[i * classes + c] = 1;
            }
            ev.phi(i, c) = phi;
        }
    }

    Matrix logits = head_logits(features, head);
    LogitLoss kernel = perturbed_ce(logits, labels, ev.phi);
    HeadGrads base = accumulate_logit_grads(kernel.d_logits, features, head);
    ev.loss = kernel.loss;
    ev.q = std::move(kernel.q);
    ev.d_features = std::move(base.d_features);
    ev.d_w = std::move(base.d_w);
    ev.d_b = std::move(base.d_b);

    if (need_quadratic) {
        double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t y = static_cast<std::size_t>(labels[i]);
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y || ev.clamped[i * classes + c]) continue;
                double coef = ev.q(i, c) * inv_n;
                if (coef == 0.0) continue;
                const double* g = ev.gvec.row(i * classes + c);
                axpy(coef, g, ev.d_w.row(c), h_dim);
                axpy(-coef, g, ev.d_w.row(y), h_dim);
            }
        }
    }
    if (!keep_meta) {
        ev.gvec = Matrix();
        ev.sig_mix = Matrix();
    }
    return ev;
}

FeatureLoss icda_loss(const Matrix& features, const std::vector<int>& labels,
                      const LinearHead& head, const ClassStats& stats,
                      const StrengthMatrix& strengths, const IcdaConfig& cfg, int t, int total,
                      const Vec& priors) {
    double lambda = lambda_at(t, total, cfg.lambda0);
    IcdaEval ev = icda_eval(features, labels, head, stats, strengths, lambda, cfg.beta, priors,
                            false);
    FeatureLoss out;
    out.loss = ev.loss;
    out.d_features = std::move(ev.d_features);
    out.d_w = std::move(ev.d_w);
    out.d_b = std::move(ev.d_b);
    out.q = std::move(ev.q);
    return out;
}

}  // namespace icda
