#pragma once

#include <vector>

#include "icda/losses.hpp"
#include "icda/model.hpp"
#include "icda/stats.hpp"
#include "icda/strength.hpp"

namespace icda {

// Bilevel training state: the strength net, its two step sizes, the meta batch
// size, and the EMA tables behind the characteristics.
struct MetaState {
    StrengthNet net;
    double eta1 = 0.1;         // virtual (inner) step size, mirrors the schedule
    double eta2 = 1e-3;        // outer step size for the net and the stats
    int meta_batch_size = 32;
    ClassEmaTables tables;
};

// One plain gradient step on the head only, no momentum or decay; the backbone
// stays frozen inside the inner problem.
LinearHead virtual_step(const LinearHead& head, const Matrix& d_w, const Vec& d_b,
                        double eta1);

// CE value and head gradient on a batch. The meta objective carries no
// perturbations, so this is the plain loss on raw logits.
struct HeadGradient {
    double loss = 0.0;
    Matrix d_w;  // C x H
    Vec d_b;     // C
};
HeadGradient meta_ce_gradient(const Matrix& features, const std::vector<int>& labels,
                              const LinearHead& head);

// Shared pieces of the exact chain rule through the one-step virtual update
// theta' = theta - eta1*g. With v the meta-CE gradient at theta', every outer
// derivative is -eta1 * d(v.g)/d(knob), and d(v.g) factors through the same
// per-slot contraction for all knobs:
//   dvz[i][c] = (v_w[c]-v_w[y]) . (h_i + gvec[i][c]) + v_b[c] - v_b[y]
//   s_i       = sum_{c != y} q[i][c] * dvz[i][c]
//   r[i][c]   = q[i][c] * (dvz[i][c] - s_i)
// Slots frozen by the perturbation ceiling respond to nothing, so r and qu are
// zero there (and dvz drops the gvec part); target slots are zero throughout.
struct MetaChain {
    double eta1 = 0.0;
    double lambda = 0.0;
    Matrix r;     // N x C
    Matrix qu;    // N x C, clamp-masked copy of q
    Vec d_alpha;  // N: dF/d alpha_i = -eta1 * (beta/N) * sum_c r[i][c]
};
MetaChain build_meta_chain(const IcdaEval& eval, const Matrix& features,
                           const std::vector<int>& labels, const LinearHead& head,
                           const HeadGradient& v, double lambda, double beta, double eta1);

// Exact dF/dOmega assembled from the chain and the per-sample forward caches
// that produced alpha_scalar, then a plain step Omega -= eta2 * grad.
StrengthNetGrads meta_omega_gradient(const StrengthNet& net, const MetaChain& chain,
                                     const std::vector<StrengthNetCache>& caches);
void meta_update_omega(StrengthNet& net, const MetaChain& chain,
                       const std::vector<StrengthNetCache>& caches, double eta2);

// Exact dF/d(mu_j) and dF/d(Sigma_j) through their appearance in the
// perturbations. d_cov is populated in full mode, d_var in diagonal mode.
struct StatsGradient {
    std::vector<Vec> d_mean;
    std::vector<Matrix> d_cov;
    std::vector<Vec> d_var;
};
StatsGradient meta_stats_gradient(const MetaChain& chain, const std::vector<int>& labels,
                                  const LinearHead& head, const HeadGradient& v,
                                  const StrengthMatrix& strengths, const ClassStats& stats);

// mu -= eta2*d_mean and Sigma -= eta2*d_cov in place, REPLACING the running
// statistics; each covariance is then symmetrized and eigen-clamped to PSD
// (diagonal mode: entries clamped at 0). eta2 == 0 returns without touching
// anything so eta2-off trajectories stay bit-identical to plain training.
void meta_update_stats(ClassStats& stats, const StatsGradient& grad, double eta2);

}  // namespace icda
