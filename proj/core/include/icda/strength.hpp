#pragma once

#include <array>
#include <vector>

#include "icda/linalg.hpp"
#include "icda/model.hpp"
#include "icda/rng.hpp"

namespace icda {

// Per-batch augmentation strengths. alpha[i][c] measures how much sample i
// resembles class c (cosine against the head row, clamped at 0); the target
// column is pinned to 0. alpha_hat is alpha/(C-1). alpha_scalar is the
// per-sample strength: nonnegative from the direct rule, possibly negative
// under the noisy-label flip rule.
struct StrengthMatrix {
    Matrix alpha;      // N x C
    Matrix alpha_hat;  // N x C
    Vec alpha_scalar;  // N
};

// alpha[i][c] = max(cos(h_i, w_c), 0) for c != y_i, 0 on the target column.
void fill_alpha_matrix(StrengthMatrix& s, const Matrix& features, const LinearHead& head,
                       const std::vector<int>& labels);

// alpha_i = (1 - cos(h_i, w_{y_i})) / 2, in [0, 1].
Vec alpha_scalar_direct(const Matrix& features, const LinearHead& head,
                        const std::vector<int>& labels);

// Noisy-label rule: a = (1 - cos)/2; keep a when a < tau, flip sign when the
// sample looks so unlike its own class that the label is probably wrong.
double alpha_scalar_noisy(double cos_theta, double tau);
Vec alpha_scalar_noisy(const Matrix& features, const LinearHead& head,
                       const std::vector<int>& labels, double tau);

// Per-class EMA baselines (decay 0.1) behind the relative characteristics.
// A class's first observation seeds its EMA directly instead of blending
// against the zero init.
struct ClassEmaTables {
    Vec mean_loss;
    Vec mean_margin;
    std::vector<bool> seen;
    double decay = 0.1;

    explicit ClassEmaTables(int classes = 0)
        : mean_loss(static_cast<std::size_t>(classes), 0.0),
          mean_margin(static_cast<std::size_t>(classes), 0.0),
          seen(static_cast<std::size_t>(classes), false) {}

    void update(const std::vector<int>& labels, const Vec& sample_losses,
                const Vec& sample_margins);
};

// The ten per-sample training characteristics feeding the strength net:
//  0 loss, 1 margin, 2 gradient norm, 3 entropy, 4 class proportion,
//  5 class mean loss, 6 relative loss, 7 relative margin,
//  8 squared head-weight norm, 9 cos(h, w_y).
using Characteristics = std::array<double, 10>;

Characteristics extract_characteristics(const Vec& q, const double* h, std::size_t h_dim,
                                        const LinearHead& head, int label,
                                        double sample_loss, const ClassEmaTables& tables,
                                        const Vec& class_proportion);

// Squash the unbounded entries (loss, class mean loss, relative loss) through
// x -> x/(1+|x|) so the tiny net sees inputs of comparable scale.
Characteristics squash_characteristics(const Characteristics& zeta);

// 10 -> 100 (rectified) -> 1 (logistic). Zero parameters give exactly 0.5.
struct StrengthNet {
    Matrix w1;  // 100 x 10
    Vec b1;     // 100
    Vec w2;     // 100
    double b2 = 0.0;

    static StrengthNet zeros();
    static StrengthNet random(Rng& rng);
};

struct StrengthNetGrads {
    Matrix w1;
    Vec b1;
    Vec w2;
    double b2 = 0.0;

    static StrengthNetGrads zeros();
};

struct StrengthNetCache {
    Characteristics input;
    Vec hidden_pre;  // 100
    double alpha = 0.0;
};

// Returns alpha in (0,1) plus the cache needed to backpropagate to Omega.
StrengthNetCache strength_forward(const StrengthNet& net, const Characteristics& zeta);

// Accumulates d(alpha)/d(Omega) scaled by d_alpha into grads.
void strength_backward(const StrengthNet& net, const StrengthNetCache& cache, double d_alpha,
                       StrengthNetGrads& grads);

// Plain SGD on the net parameters (no momentum, no decay).
void strength_net_step(StrengthNet& net, const StrengthNetGrads& grads, double lr);

}  // namespace icda
