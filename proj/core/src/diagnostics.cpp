#include "icda/diagnostics.hpp"

#include <cmath>
#include <cstdio>

#include "icda/losses.hpp"
#include "icda/numerics.hpp"

namespace icda {

namespace {

void class_diff(const LinearHead& head, std::size_t c, std::size_t y, Vec& dw) {
    std::size_t h_dim = head.w.cols;
    const double* wc = head.w.row(c);
    const double* wy = head.w.row(y);
    for (std::size_t a = 0; a < h_dim; ++a) dw[a] = wc[a] - wy[a];
}

}  // namespace

Matrix perturbation_delta_u(const std::string& method, const Matrix& features,
                            const std::vector<int>& labels, const LinearHead& head,
                            const ClassStats& stats, const ConfusionRates& confusion,
                            const StrengthMatrix& strengths, const Vec& priors,
                            const PerturbationParams& params) {
    std::size_t n = labels.size();
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    Matrix du(n, classes);
    if (method == "ce") return du;

    if (method == "la") {
        ICDA_REQUIRE(priors.size() == classes, "perturbation_delta_u: prior count mismatch");
        Vec lp(classes);
        for (std::size_t c = 0; c < classes; ++c) {
            ICDA_REQUIRE(priors[c] > 0.0, "perturbation_delta_u: nonpositive prior");
            lp[c] = std::log(priors[c]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t y = static_cast<std::size_t>(labels[i]);
            for (std::size_t c = 0; c < classes; ++c)
                if (c != y) du(i, c) = lp[c] - lp[y];
        }
        return du;
    }

    if (method == "isda") {
        Vec dw(h_dim), v(h_dim);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t y = static_cast<std::size_t>(labels[i]);
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y) continue;
                class_diff(head, c, y, dw);
                if (stats.mode() == CovMode::full) {
                    const Matrix& s = stats.cov(static_cast<int>(y));
                    for (std::size_t a = 0; a < h_dim; ++a)
                        v[a] = dot(s.row(a), dw.data(), h_dim);
                } else {
                    const Vec& s = stats.var(static_cast<int>(y));
                    for (std::size_t a = 0; a < h_dim; ++a) v[a] = s[a] * dw[a];
                }
                du(i, c) = 0.5 * params.lambda * dot(dw, v);
            }
        }
        return du;
    }

    if (method == "risda") {
        ICDA_REQUIRE(confusion.classes() == static_cast<int>(classes),
                     "perturbation_delta_u: confusion size mismatch");
        Vec dw(h_dim), v(h_dim), m(h_dim);
        Matrix s_full;
        Vec s_diag;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t y = static_cast<std::size_t>(labels[i]);
            std::fill(m.begin(), m.end(), 0.0);
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y) continue;
                double eps = confusion.rate(static_cast<int>(y), static_cast<int>(c));
                if (eps != 0.0)
                    axpy(eps, stats.mean(static_cast<int>(c)).data(), m.data(), h_dim);
            }
            if (stats.mode() == CovMode::full) {
                s_full = stats.cov(static_cast<int>(y));
                for (std::size_t c = 0; c < classes; ++c) {
                    if (c == y) continue;
                    double eps = confusion.rate(static_cast<int>(y), static_cast<int>(c));
                    if (eps != 0.0)
                        axpy(eps, stats.cov(static_cast<int>(c)).data.data(),
                             s_full.data.data(), s_full.data.size());
                }
            } else {
                s_diag = stats.var(static_cast<int>(y));
                for (std::size_t c = 0; c < classes; ++c) {
                    if (c == y) continue;
                    double eps = confusion.rate(static_cast<int>(y), static_cast<int>(c));
                    if (eps != 0.0)
                        axpy(eps, stats.var(static_cast<int>(c)).data(), s_diag.data(), h_dim);
                }
            }
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y) continue;
                class_diff(head, c, y, dw);
                if (stats.mode() == CovMode::full) {
                    for (std::size_t a = 0; a < h_dim; ++a)
                        v[a] = dot(s_full.row(a), dw.data(), h_dim);
                } else {
                    for (std::size_t a = 0; a < h_dim; ++a) v[a] = s_diag[a] * dw[a];
                }
                du(i, c) = params.alpha_r * dot(dw, m) + params.beta_r * dot(dw, v);
            }
        }
        return du;
    }

    if (method == "icda") {
        PerturbationTerms terms = icda_perturbations(features, labels, head, stats, strengths,
                                                     params.lambda, params.beta, priors);
        return terms.phi_hat;
    }

    throw ContractViolation("perturbation_delta_u: unknown method tag '" + method + "'");
}

RegularizerReport regularizer(const std::string& method, const Matrix& logits,
                              const Matrix& features, const std::vector<int>& labels,
                              const LinearHead& head, const ClassStats& stats,
                              const ConfusionRates& confusion,
                              const StrengthMatrix& strengths, const Vec& priors,
                              const PerturbationParams& params) {
    std::size_t n = labels.size();
    std::size_t classes = head.w.rows;
    ICDA_REQUIRE(logits.rows == n && logits.cols == classes,
                 "regularizer: logits shape mismatch");

    Matrix q(n, classes);
    for (std::size_t i = 0; i < n; ++i) softmax(logits.row(i), classes, q.row(i));

    Matrix du = perturbation_delta_u(method, features, labels, head, stats, confusion,
                                     strengths, priors, params);

    RegularizerReport rep;
    rep.method = method;
    // (q - y)' du per sample; target slots of du are zero for every method, so
    // only the non-target sum survives.
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t y = static_cast<std::size_t>(labels[i]);
        for (std::size_t c = 0; c < classes; ++c)
            if (c != y) rep.total += q(i, c) * du(i, c);
    }

    if (method == "ce") return rep;
    if (method == "la") {
        rep.delta_term = rep.total;
        return rep;
    }
    if (method == "isda") {
        rep.mapped_variance_term = rep.total;
        return rep;
    }
    if (method == "risda") {
        // Re-split the mixed rows: the boundary part is the du of a pure
        // alpha_r run, the rest is the quadratic part.
        PerturbationParams lin_only = params;
        lin_only.beta_r = 0.0;
        Matrix du_lin = perturbation_delta_u(method, features, labels, head, stats,
                                             confusion, strengths, priors, lin_only);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t y = static_cast<std::size_t>(labels[i]);
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y) continue;
                rep.boundary_term += q(i, c) * du_lin(i, c);
                rep.mapped_variance_term += q(i, c) * (du(i, c) - du_lin(i, c));
            }
        }
        return rep;
    }

    // icda: drop the constant beta*alpha_i the phi rows carry, then read the
    // components off the assembled pieces.
    PerturbationTerms terms = icda_perturbations(features, labels, head, stats, strengths,
                                                 params.lambda, params.beta, priors);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t y = static_cast<std::size_t>(labels[i]);
        rep.total -= terms.beta_alpha[i];
        rep.margin_term -= terms.beta_alpha[i] * q(i, y);
        for (std::size_t c = 0; c < classes; ++c) {
            if (c == y) continue;
            rep.delta_term += q(i, c) * terms.delta(i, c);
            rep.mapped_variance_term += q(i, c) * 0.5 * params.lambda * terms.p(i, c);
            rep.boundary_term += q(i, c) * params.lambda * terms.q_kept(i, c);
        }
    }
    return rep;
}

TaylorTable taylor_check(const std::function<double(const Vec&)>& loss_fn, int label,
                         const Vec& u, const Vec& du, const std::vector<double>& eps_list) {
    ICDA_REQUIRE(u.size() == du.size(), "taylor_check: length mismatch");
    ICDA_REQUIRE(!eps_list.empty(), "taylor_check: empty eps list");
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
        ICDA_REQUIRE(eps_list[k] > 0.0, "taylor_check: eps must be positive");
        if (k > 0)
            ICDA_REQUIRE(eps_list[k] < eps_list[k - 1], "taylor_check: eps must decrease");
    }

    Vec q = softmax(u);
    double first_order = -du[static_cast<std::size_t>(label)];
    for (std::size_t j = 0; j < u.size(); ++j) first_order += q[j] * du[j];
    double base = loss_fn(u);

    TaylorTable table;
    Vec shifted(u.size());
    for (double eps : eps_list) {
        for (std::size_t j = 0; j < u.size(); ++j) shifted[j] = u[j] + eps * du[j];
        double err = std::abs(loss_fn(shifted) - base - eps * first_order);
        table.rows.push_back({eps, err});
    }
    for (std::size_t k = 1; k < table.rows.size(); ++k) {
        double prev = table.rows[k - 1].err;
        table.ratios.push_back(prev > 0.0 ? table.rows[k].err / prev : 0.0);
    }
    return table;
}

double mapped_variance(const LinearHead& head, int c, int y, const Matrix& sigma_y) {
    ICDA_REQUIRE(c != y, "mapped_variance: c equals y");
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(sigma_y.rows == h_dim && sigma_y.cols == h_dim,
                 "mapped_variance: covariance shape mismatch");
    Vec dw(h_dim);
    class_diff(head, static_cast<std::size_t>(c), static_cast<std::size_t>(y), dw);
    double out = 0.0;
    for (std::size_t a = 0; a < h_dim; ++a)
        out += dw[a] * dot(sigma_y.row(a), dw.data(), h_dim);
    return out;
}

double mapped_variance(const LinearHead& head, int c, int y, const Vec& var_y) {
    ICDA_REQUIRE(c != y, "mapped_variance: c equals y");
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(var_y.size() == h_dim, "mapped_variance: variance length mismatch");
    Vec dw(h_dim);
    class_diff(head, static_cast<std::size_t>(c), static_cast<std::size_t>(y), dw);
    double out = 0.0;
    for (std::size_t a = 0; a < h_dim; ++a) out += var_y[a] * dw[a] * dw[a];
    return out;
}

BoundaryDistance boundary_distance(const LinearHead& head, int c, int y, const Vec& mu_c) {
    ICDA_REQUIRE(c != y, "boundary_distance: c equals y");
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(mu_c.size() == h_dim, "boundary_distance: mean length mismatch");
    Vec dw(h_dim);
    class_diff(head, static_cast<std::size_t>(c), static_cast<std::size_t>(y), dw);
    double nrm = norm2(dw);
    ICDA_REQUIRE(nrm >= 1e-12, "boundary_distance: degenerate boundary, ||dw|| ~ 0");
    BoundaryDistance out;
    out.raw = dot(dw, mu_c);
    out.normalized = out.raw / nrm;
    return out;
}

MarginHistogram margin_distribution(const Matrix& logits, const std::vector<int>& labels) {
    std::size_t n = logits.rows;
    std::size_t classes = logits.cols;
    ICDA_REQUIRE(labels.size() == n, "margin_distribution: label count mismatch");

    constexpr int kBins = 40;
    MarginHistogram hist;
    hist.bin_left.resize(kBins);
    hist.count.assign(kBins, 0);
    for (int b = 0; b < kBins; ++b)
        hist.bin_left[b] = -1.0 + 2.0 * static_cast<double>(b) / kBins;

    Vec q(classes);
    int small = 0;
    for (std::size_t i = 0; i < n; ++i) {
        softmax(logits.row(i), classes, q.data());
        std::size_t y = static_cast<std::size_t>(labels[i]);
        double best_other = -1.0;
        for (std::size_t c = 0; c < classes; ++c)
            if (c != y && q[c] > best_other) best_other = q[c];
        double margin = q[y] - best_other;
        int b = static_cast<int>(std::floor((margin + 1.0) / 2.0 * kBins));
        if (b < 0) b = 0;
        if (b >= kBins) b = kBins - 1;
        hist.count[b] += 1;
        if (margin > 0.0) {
            hist.correct += 1;
            if (margin < 0.2) small += 1;
        }
    }
    hist.total = static_cast<int>(n);
    if (hist.correct > 0)
        hist.small_margin_fraction = static_cast<double>(small) / hist.correct;
    return hist;
}

std::string margin_histogram_csv(const MarginHistogram& hist) {
    std::string out = "bin_left,count\n";
    char buf[64];
    for (std::size_t b = 0; b < hist.bin_left.size(); ++b) {
        std::snprintf(buf, sizeof(buf), "%.4f,%d\n", hist.bin_left[b], hist.count[b]);
        out += buf;
    }
    return out;
}

}  // namespace icda
