#include "icda/strength.hpp"

#include <cmath>

#include "icda/numerics.hpp"

namespace icda {

void fill_alpha_matrix(StrengthMatrix& s, const Matrix& features, const LinearHead& head,
                       const std::vector<int>& labels) {
    std::size_t n = features.rows;
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;
    ICDA_REQUIRE(features.cols == h_dim, "alpha_matrix: feature dim mismatch");
    ICDA_REQUIRE(labels.size() == n, "alpha_matrix: label count mismatch");

    s.alpha = Matrix(n, classes);
    s.alpha_hat = Matrix(n, classes);
    double inv = 1.0 / static_cast<double>(classes - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double* h = features.row(i);
        int y = labels[i];
        for (std::size_t c = 0; c < classes; ++c) {
            if (static_cast<int>(c) == y) continue;
            double cs = cosine(h, head.w.row(c), h_dim);
            double a = cs > 0.0 ? cs : 0.0;
            s.alpha(i, c) = a;
            s.alpha_hat(i, c) = a * inv;
        }
    }
}

Vec alpha_scalar_direct(const Matrix& features, const LinearHead& head,
                        const std::vector<int>& labels) {
    std::size_t n = features.rows;
    ICDA_REQUIRE(labels.size() == n, "alpha_scalar_direct: label count mismatch");
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double cs = cosine(features.row(i), head.w.row(static_cast<std::size_t>(labels[i])),
                           head.w.cols);
        out[i] = (1.0 - cs) / 2.0;
    }
    return out;
}

double alpha_scalar_noisy(double cos_theta, double tau) {
    ICDA_REQUIRE(tau > 0.0 && tau <= 1.0, "alpha_scalar_noisy: tau must be in (0,1]");
    double a = (1.0 - cos_theta) / 2.0;
    return a < tau ? a : -a;
}

Vec alpha_scalar_noisy(const Matrix& features, const LinearHead& head,
                       const std::vector<int>& labels, double tau) {
    std::size_t n = features.rows;
    ICDA_REQUIRE(labels.size() == n, "alpha_scalar_noisy: label count mismatch");
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double cs = cosine(features.row(i), head.w.row(static_cast<std::size_t>(labels[i])),
                           head.w.cols);
        out[i] = alpha_scalar_noisy(cs, tau);
    }
    return out;
}

void ClassEmaTables::update(const std::vector<int>& labels, const Vec& sample_losses,
                            const Vec& sample_margins) {
    ICDA_REQUIRE(labels.size() == sample_losses.size() &&
                     labels.size() == sample_margins.size(),
                 "ClassEmaTables: length mismatch");
    std::size_t classes = mean_loss.size();
    Vec loss_sum(classes, 0.0), margin_sum(classes, 0.0), count(classes, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::size_t y = static_cast<std::size_t>(labels[i]);
        ICDA_REQUIRE(y < classes, "ClassEmaTables: label out of range");
        loss_sum[y] += sample_losses[i];
        margin_sum[y] += sample_margins[i];
        count[y] += 1.0;
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (count[c] == 0.0) continue;
        double loss_b = loss_sum[c] / count[c];
        double margin_b = margin_sum[c] / count[c];
        if (!seen[c]) {
            mean_loss[c] = loss_b;
            mean_margin[c] = margin_b;
            seen[c] = true;
        } else {
            mean_loss[c] = (1.0 - decay) * mean_loss[c] + decay * loss_b;
            mean_margin[c] = (1.0 - decay) * mean_margin[c] + decay * margin_b;
        }
    }
}

Characteristics extract_characteristics(const Vec& q, const double* h, std::size_t h_dim,
                                        const LinearHead& head, int label,
                                        double sample_loss, const ClassEmaTables& tables,
                                        const Vec& class_proportion) {
    std::size_t classes = q.size();
    std::size_t y = static_cast<std::size_t>(label);
    ICDA_REQUIRE(y < classes, "extract_characteristics: label out of range");

    double max_other = 0.0;
    bool first = true;
    for (std::size_t c = 0; c < classes; ++c) {
        if (c == y) continue;
        if (first || q[c] > max_other) {
            max_other = q[c];
            first = false;
        }
    }
    double margin = q[y] - max_other;

    // ||y - q||_2 — the logit-gradient norm of the sample's CE loss.
    double grad_norm = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        double d = (c == y ? 1.0 : 0.0) - q[c];
        grad_norm += d * d;
    }
    grad_norm = std::sqrt(grad_norm);

    double entropy = 0.0;
    for (double qc : q)
        if (qc > 0.0) entropy -= qc * std::log2(qc);

    const double* wy = head.w.row(y);
    double w_norm_sq = dot(wy, wy, head.w.cols);

    Characteristics zeta;
    zeta[0] = sample_loss;
    zeta[1] = margin;
    zeta[2] = grad_norm;
    zeta[3] = entropy;
    zeta[4] = class_proportion[y];
    zeta[5] = tables.mean_loss[y];
    zeta[6] = sample_loss - tables.mean_loss[y];
    zeta[7] = margin - tables.mean_margin[y];
    zeta[8] = w_norm_sq;
    zeta[9] = cosine(h, wy, h_dim);
    return zeta;
}

Characteristics squash_characteristics(const Characteristics& zeta) {
    auto squash = [](double x) { return x / (1.0 + std::abs(x)); };
    Characteristics out = zeta;
    out[0] = squash(zeta[0]);
    out[5] = squash(zeta[5]);
    out[6] = squash(zeta[6]);
    return out;
}

StrengthNet StrengthNet::zeros() {
    StrengthNet net;
    net.w1 = Matrix(100, 10);
    net.b1 = Vec(100, 0.0);
    net.w2 = Vec(100, 0.0);
    net.b2 = 0.0;
    return net;
}

StrengthNet StrengthNet::random(Rng& rng) {
    StrengthNet net = zeros();
    double bound1 = 1.0 / std::sqrt(10.0);
    for (double& v : net.w1.data) v = rng.uniform(-bound1, bound1);
    double bound2 = 1.0 / std::sqrt(100.0);
    for (double& v : net.w2) v = rng.uniform(-bound2, bound2);
    return net;
}

StrengthNetGrads StrengthNetGrads::zeros() {
    StrengthNetGrads g;
    g.w1 = Matrix(100, 10);
    g.b1 = Vec(100, 0.0);
    g.w2 = Vec(100, 0.0);
    g.b2 = 0.0;
    return g;
}

StrengthNetCache strength_forward(const StrengthNet& net, const Characteristics& zeta) {
    StrengthNetCache cache;
    cache.input = zeta;
    cache.hidden_pre.resize(100);
    for (std::size_t j = 0; j < 100; ++j) {
        double z = net.b1[j];
        const double* row = net.w1.row(j);
        for (std::size_t k = 0; k < 10; ++k) z += row[k] * zeta[k];
        cache.hidden_pre[j] = z;
    }
    double out = net.b2;
    for (std::size_t j = 0; j < 100; ++j)
        if (cache.hidden_pre[j] > 0.0) out += net.w2[j] * cache.hidden_pre[j];
    cache.alpha = 1.0 / (1.0 + std::exp(-out));
    return cache;
}

void strength_backward(const StrengthNet& net, const StrengthNetCache& cache, double d_alpha,
                       StrengthNetGrads& grads) {
    double a = cache.alpha;
    double d_out = d_alpha * a * (1.0 - a);
    grads.b2 += d_out;
    for (std::size_t j = 0; j < 100; ++j) {
        double pre = cache.hidden_pre[j];
        if (pre > 0.0) grads.w2[j] += d_out * pre;
        double d_hidden = pre > 0.0 ? d_out * net.w2[j] : 0.0;
        if (d_hidden == 0.0) continue;
        grads.b1[j] += d_hidden;
        double* row = grads.w1.row(j);
        for (std::size_t k = 0; k < 10; ++k) row[k] += d_hidden * cache.input[k];
    }
}

void strength_net_step(StrengthNet& net, const StrengthNetGrads& grads, double lr) {
    for (std::size_t i = 0; i < net.w1.data.size(); ++i)
        net.w1.data[i] -= lr * grads.w1.data[i];
    for (std::size_t j = 0; j < 100; ++j) {
        net.b1[j] -= lr * grads.b1[j];
        net.w2[j] -= lr * grads.w2[j];
    }
    net.b2 -= lr * grads.b2;
}

}  // namespace icda
