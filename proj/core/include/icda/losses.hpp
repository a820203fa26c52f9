#pragma once

#include <cstdint>
#include <vector>

#include "icda/linalg.hpp"
#include "icda/model.hpp"
#include "icda/stats.hpp"
#include "icda/strength.hpp"

namespace icda {

struct IcdaConfig {
    double lambda0 = 0.5;       // augmentation strength ceiling, reached at t=T
    double beta = 0.1;          // per-sample margin weight
    double tau = 0.9;           // noisy-label flip threshold
    CovMode cov_mode = CovMode::full;
    bool noise_mode = false;    // use the sign-flip rule for alpha_i
};

// Linear ramp: lambda(t) = (t/T) * lambda0.
double lambda_at(int t, int total, double lambda0);

// Loss over logits only (no feature dependence). q is the softmax actually
// used by the loss (after any logit shift), kept for diagnostics.
struct LogitLoss {
    double loss = 0.0;
    Matrix d_logits;  // (q - onehot)/N
    Matrix q;         // N x C
};

// Mean cross entropy over logits + delta_u, the single kernel every loss in
// this module routes through. delta_u rows may contain -inf (a class with no
// probability mass); the target entry must be finite.
LogitLoss perturbed_ce(const Matrix& logits, const std::vector<int>& labels,
                       const Matrix& delta_u);

LogitLoss ce_loss(const Matrix& logits, const std::vector<int>& labels);

// Prior-shift loss in difference form: delta_u[i][j] = log pi_j - log pi_{y_i},
// which equals the usual formulation exactly (the per-sample constant
// log pi_{y_i} cancels between numerator and denominator).
LogitLoss la_loss(const Matrix& logits, const std::vector<int>& labels, const Vec& priors);

// Shared assembly of head and feature gradients from dL/dlogits:
// d_w = d_logits^T features, d_b = column sums, d_features = d_logits w.
// Every training path uses this one routine so methods that coincide
// mathematically also coincide bitwise.
struct HeadGrads {
    Matrix d_w;        // C x H
    Vec d_b;           // C
    Matrix d_features; // N x H
};
HeadGrads accumulate_logit_grads(const Matrix& d_logits, const Matrix& features,
                                 const LinearHead& head);

// Result shape shared by the feature-space losses.
struct FeatureLoss {
    double loss = 0.0;
    Matrix d_features;
    Matrix d_w;
    Vec d_b;
    Matrix q;  // perturbed softmax, N x C
};

// CE over logits perturbed by (lambda/2) dw' Sigma_y dw on non-target slots.
// Gradients flow through the dw factors; Sigma is stop-gradient.
FeatureLoss isda_loss(const Matrix& features, const std::vector<int>& labels,
                      const LinearHead& head, const ClassStats& stats, double lambda);

// CE over logits perturbed class-wise by
//   alpha_r dw m_y + beta_r dw' S_y dw,
// m_y = sum_{c!=y} eps[y][c] mu_c, S_y = Sigma_y + sum_{c!=y} eps[y][c] Sigma_c.
FeatureLoss risda_loss(const Matrix& features, const std::vector<int>& labels,
                       const LinearHead& head, const ClassStats& stats,
                       const ConfusionRates& confusion, double alpha_r, double beta_r);

// The assembled per-pair perturbation pieces, unclamped:
//   phi_hat[i][c] = (lambda/2) P + lambda Q_kept + delta + beta*alpha_i.
// P[i][c] is the quadratic form dw' (Sigma_y + sum_j ahat[i][j] Sigma_j) dw,
// Q_kept[i][c] = ahat[i][c] * dw . mu_c, delta[i][c] = log(pi_c/pi_y).
// Target columns are zero throughout.
struct PerturbationTerms {
    Matrix p;
    Matrix q_kept;
    Matrix delta;
    Vec beta_alpha;  // per sample
    Matrix phi_hat;
};
PerturbationTerms icda_perturbations(const Matrix& features, const std::vector<int>& labels,
                                     const LinearHead& head, const ClassStats& stats,
                                     const StrengthMatrix& strengths, double lambda,
                                     double beta, const Vec& priors);

// Full evaluation with gradients. When keep_meta is set, the intermediates
// the bilevel update needs are retained: per-(i,c) gradient direction gvec
// (= d phi_hat[i][c] / d w_c), and the per-sample mixed covariance.
struct IcdaEval {
    double loss = 0.0;
    Matrix q;                          // N x C perturbed softmax
    Matrix phi;                        // N x C clamped perturbations
    std::vector<std::uint8_t> clamped; // N*C, 1 where the clamp froze the entry
    Matrix d_features;
    Matrix d_w;
    Vec d_b;
    // keep_meta extras:
    Matrix gvec;     // (N*C) x H, row i*C+c = lambda*(SigMix_i dw) + lambda*ahat*mu_c
    Matrix sig_mix;  // N x H*H (full) or N x H (diagonal)
};
IcdaEval icda_eval(const Matrix& features, const std::vector<int>& labels,
                   const LinearHead& head, const ClassStats& stats,
                   const StrengthMatrix& strengths, double lambda, double beta,
                   const Vec& priors, bool keep_meta);

FeatureLoss icda_loss(const Matrix& features, const std::vector<int>& labels,
                      const LinearHead& head, const ClassStats& stats,
                      const StrengthMatrix& strengths, const IcdaConfig& cfg, int t, int total,
                      const Vec& priors);

// Perturbation ceiling applied before exponentiation; covariance spikes early
// in training can otherwise overflow. Entries at the ceiling contribute no
// P/Q gradient.
inline constexpr double kPhiClamp = 50.0;

}  // namespace icda
