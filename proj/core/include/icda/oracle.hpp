#pragma once

#include <vector>

#include "icda/linalg.hpp"
#include "icda/model.hpp"
#include "icda/rng.hpp"
#include "icda/stats.hpp"
#include "icda/strength.hpp"

namespace icda {

// One explicit draw of the augmentation the surrogate loss integrates out:
//   h' ~ N(h_i + lambda*alpha*mu_c, lambda*(Sigma_{y_i} + alpha*Sigma_c)).
// lambda=0 returns h_i exactly.
Vec sample_augmented(const Vec& h, int y, int c, double alpha, double lambda,
                     const ClassStats& stats, Rng& rng);

// Weighted Monte-Carlo estimate of the expected augmented loss: every pair
// (i, c != y_i) with alpha[i][c] > 0 contributes M draws of the augmented
// feature, scored by CE, weighted by alpha[i][c]/pi_{y_i} and normalized by
// the total weight. The same weights appear on the closed-form bound side, so
// the two are directly comparable.
struct McResult {
    double estimate = 0.0;
    double se = 0.0;           // standard error of the estimate
    double total_weight = 0.0; // sum of alpha/pi weights; 0 means no active pair
};
McResult mc_expected_loss(const Matrix& features, const std::vector<int>& labels,
                          const LinearHead& head, const ClassStats& stats,
                          const StrengthMatrix& strengths, double lambda, int m_per_pair,
                          const Vec& priors, Rng& rng);

// Closed-form upper bound on the expected augmented loss, with the full
// linear term dw . (alpha*mu_c) and the same alpha/pi weights as the MC side,
// unclamped. This is the quantity the chain of Jensen and moment-generating
// function steps bounds; the deployed training loss modifies it afterwards
// (prior shift, linear-term truncation, margin), so those knobs do not appear
// here.
double surrogate_upper_bound(const Matrix& features, const std::vector<int>& labels,
                             const LinearHead& head, const ClassStats& stats,
                             const StrengthMatrix& strengths, double lambda,
                             const Vec& priors);

// One bound-vs-MC comparison, serializable into the verification report.
struct BoundCheckRecord {
    std::uint64_t instance_seed = 0;
    double lambda = 0.0;
    int m = 0;
    double mc_estimate = 0.0;
    double se = 0.0;
    double bound = 0.0;
    bool pass = false;
};

}  // namespace icda
