#include "icda/meta.hpp"

#include <algorithm>

#include "icda/numerics.hpp"

namespace icda {

namespace {

void class_diff(const LinearHead& head, std::size_t c, std::size_t y, Vec& dw) {
    std::size_t h_dim = head.w.cols;
    const double* wc = head.w.row(c);
    const double* wy = head.w.row(y);
    for (std::size_t a = 0; a < h_dim; ++a) dw[a] = wc[a] - wy[a];
}

Matrix head_logits(const Matrix& features, const LinearHead& head) {
    std::size_t n = features.rows;
    std::size_t classes = head.w.rows;
    Matrix logits(n, classes);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < classes; ++c)
            logits(i, c) = dot(head.w.row(c), features.row(i), head.w.cols) + head.b[c];
    return logits;
}

}  // namespace

LinearHead virtual_step(const LinearHead& head, const Matrix& d_w, const Vec& d_b,
                        double eta1) {
    ICDA_REQUIRE(d_w.same_shape(head.w) && d_b.size() == head.b.size(),
                 "virtual_step: gradient shape mismatch");
    LinearHead out = head;
    if (eta1 == 0.0) return out;
    axpy(-eta1, d_w.data.data(), out.w.data.data(), out.w.data.size());
    axpy(-eta1, d_b.data(), out.b.data(), out.b.size());
    return out;
}

HeadGradient meta_ce_gradient(const Matrix& features, const std::vector<int>& labels,
                              const LinearHead& head) {
    ICDA_REQUIRE(features.rows > 0, "meta_ce_gradient: empty batch");
    Matrix logits = head_logits(features, head);
    LogitLoss kernel = ce_loss(logits, labels);
    HeadGrads grads = accumulate_logit_grads(kernel.d_logits, features, head);
    HeadGradient out;
    out.loss = kernel.loss;
    out.d_w = std::move(grads.d_w);
    out.d_b = std::move(grads.d_b);
    return out;
}

MetaChain build_meta_chain(const IcdaEval& eval, const Matrix& features,
                           const std::vector<int>& labels, const LinearHead& head,
                           const HeadGradient& v, double lambda, double beta, double eta1) {
    std::size_t n = features.rows;
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(eval.q.rows == n && eval.q.cols == classes,
                 "build_meta_chain: eval shape mismatch");
    ICDA_REQUIRE(v.d_w.rows == classes && v.d_w.cols == h_dim,
                 "build_meta_chain: meta gradient shape mismatch");
    ICDA_REQUIRE(labels.size() == n, "build_meta_chain: label count mismatch");

    MetaChain chain;
    chain.eta1 = eta1;
    chain.lambda = lambda;
    chain.r = Matrix(n, classes);
    chain.qu = Matrix(n, classes);
    chain.d_alpha = Vec(n, 0.0);

    bool has_gvec = lambda != 0.0 && eval.gvec.rows == n * classes;
    double scale = -eta1 * beta / static_cast<double>(n);
    Vec t(classes), dvz(classes);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t y = static_cast<std::size_t>(labels[i]);
        const double* h = features.row(i);
        for (std::size_t c = 0; c < classes; ++c) t[c] = dot(v.d_w.row(c), h, h_dim);

        double s_i = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            if (c == y) {
                dvz[c] = 0.0;
                continue;
            }
            double val = t[c] - t[y] + v.d_b[c] - v.d_b[y];
            if (has_gvec && !eval.clamped[i * classes + c]) {
                const double* g = eval.gvec.row(i * classes + c);
                val += dot(v.d_w.row(c), g, h_dim) - dot(v.d_w.row(y), g, h_dim);
            }
            dvz[c] = val;
            s_i += eval.q(i, c) * val;
        }

        double rsum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            if (c == y || eval.clamped[i * classes + c]) continue;
            double q = eval.q(i, c);
            chain.qu(i, c) = q;
            double rv = q * (dvz[c] - s_i);
            chain.r(i, c) = rv;
            rsum += rv;
        }
        chain.d_alpha[i] = scale * rsum;
    }
    return chain;
}

StrengthNetGrads meta_omega_gradient(const StrengthNet& net, const MetaChain& chain,
                                     const std::vector<StrengthNetCache>& caches) {
    ICDA_REQUIRE(caches.size() == chain.d_alpha.size(),
                 "meta_omega_gradient: cache count mismatch");
    StrengthNetGrads grads = StrengthNetGrads::zeros();
    for (std::size_t i = 0; i < caches.size(); ++i)
        if (chain.d_alpha[i] != 0.0) strength_backward(net, caches[i], chain.d_alpha[i], grads);
    return grads;
}

void meta_update_omega(StrengthNet& net, const MetaChain& chain,
                       const std::vector<StrengthNetCache>& caches, double eta2) {
    if (eta2 == 0.0) return;
    StrengthNetGrads grads = meta_omega_gradient(net, chain, caches);
    strength_net_step(net, grads, eta2);
}

StatsGradient meta_stats_gradient(const MetaChain& chain, const std::vector<int>& labels,
                                  const LinearHead& head, const HeadGradient& v,
                                  const StrengthMatrix& strengths, const ClassStats& stats) {
    std::size_t n = labels.size();
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    bool full = stats.mode() == CovMode::full;

    StatsGradient out;
    out.d_mean.assign(classes, Vec(h_dim, 0.0));
    if (full)
        out.d_cov.assign(classes, Matrix(h_dim, h_dim));
    else
        out.d_var.assign(classes, Vec(h_dim, 0.0));
    if (chain.lambda == 0.0) return out;

    double f = -chain.eta1 * chain.lambda / static_cast<double>(n);
    Vec dw(h_dim), dv(h_dim);
    Matrix e_full(full ? h_dim : 0, full ? h_dim : 0);
    Vec e_diag(full ? 0 : h_dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t y = static_cast<std::size_t>(labels[i]);
        if (full)
            e_full.fill(0.0);
        else
            std::fill(e_diag.begin(), e_diag.end(), 0.0);
        bool any = false;
        for (std::size_t c = 0; c < classes; ++c) {
            if (c == y) continue;
            double rv = chain.r(i, c);
            double qv = chain.qu(i, c);
            if (rv == 0.0 && qv == 0.0) continue;
            any = true;
            class_diff(head, c, y, dw);
            for (std::size_t a = 0; a < h_dim; ++a) dv[a] = v.d_w(c, a) - v.d_w(y, a);

            double ah = strengths.alpha_hat(i, c);
            if (ah != 0.0) {
                axpy(f * ah * rv, dw.data(), out.d_mean[c].data(), h_dim);
                axpy(f * ah * qv, dv.data(), out.d_mean[c].data(), h_dim);
            }

            // Per-sample kernel shared by every class's covariance gradient:
            //   E_i = sum_c [ r/2 * dw dw' + qu * dv dw' ]
            if (full) {
                for (std::size_t a = 0; a < h_dim; ++a) {
                    double ra = 0.5 * rv * dw[a] + qv * dv[a];
                    if (ra != 0.0) axpy(ra, dw.data(), e_full.row(a), h_dim);
                }
            } else {
                for (std::size_t a = 0; a < h_dim; ++a)
                    e_diag[a] += (0.5 * rv * dw[a] + qv * dv[a]) * dw[a];
            }
        }
        if (!any) continue;
        for (std::size_t j = 0; j < classes; ++j) {
            double coef = j == y ? 1.0 : strengths.alpha_hat(i, j);
            if (coef == 0.0) continue;
            if (full)
                axpy(f * coef, e_full.data.data(), out.d_cov[j].data.data(),
                     e_full.data.size());
            else
                axpy(f * coef, e_diag.data(), out.d_var[j].data(), h_dim);
        }
    }
    return out;
}

void meta_update_stats(ClassStats& stats, const StatsGradient& grad, double eta2) {
    if (eta2 == 0.0) return;
    int classes = stats.classes();
    std::size_t h_dim = static_cast<std::size_t>(stats.feature_dim());
    ICDA_REQUIRE(grad.d_mean.size() == static_cast<std::size_t>(classes),
                 "meta_update_stats: gradient class count mismatch");
    for (int c = 0; c < classes; ++c) {
        axpy(-eta2, grad.d_mean[static_cast<std::size_t>(c)].data(),
             stats.mutable_mean(c).data(), h_dim);
        if (stats.mode() == CovMode::full) {
            Matrix& s = stats.mutable_cov(c);
            axpy(-eta2, grad.d_cov[static_cast<std::size_t>(c)].data.data(), s.data.data(),
                 s.data.size());
            s = psd_clamp(s);
        } else {
            Vec& s = stats.mutable_var(c);
            axpy(-eta2, grad.d_var[static_cast<std::size_t>(c)].data(), s.data(), h_dim);
            for (double& x : s)
                if (x < 0.0) x = 0.0;
        }
    }
}

}  // namespace icda
