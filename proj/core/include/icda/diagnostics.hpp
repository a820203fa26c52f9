#pragma once

#include <functional>
#include <string>
#include <vector>

#include "icda/linalg.hpp"
#include "icda/model.hpp"
#include "icda/stats.hpp"
#include "icda/strength.hpp"

namespace icda {

struct PerturbationParams {
    double lambda = 0.0;
    double beta = 0.0;
    double alpha_r = 0.5;
    double beta_r = 0.5;
};

// The logit shift each method adds before the softmax, one row per sample,
// target slots zero. Methods: ce (all zero), la, isda, risda, icda. The icda
// rows are the unclamped phi_hat values, so beta*alpha_i rides on every
// non-target slot; cross entropy is invariant to that constant shift.
Matrix perturbation_delta_u(const std::string& method, const Matrix& features,
                            const std::vector<int>& labels, const LinearHead& head,
                            const ClassStats& stats, const ConfusionRates& confusion,
                            const StrengthMatrix& strengths, const Vec& priors,
                            const PerturbationParams& params);

// First-order penalty R = (q - y)' delta_u, split into the pieces that act on
// different generalization factors. For icda the per-sample constant
// beta*alpha_i is dropped (it cannot steer the optimizer), which is what makes
// the margin component -beta * alpha_i * q[i][y].
struct RegularizerReport {
    std::string method;
    double total = 0.0;
    double margin_term = 0.0;           // sample-wise margin pressure
    double mapped_variance_term = 0.0;  // quadratic forms dw' S dw
    double boundary_term = 0.0;         // linear terms dw . mu
    double delta_term = 0.0;            // class-wise prior shift
};
RegularizerReport regularizer(const std::string& method, const Matrix& logits,
                              const Matrix& features, const std::vector<int>& labels,
                              const LinearHead& head, const ClassStats& stats,
                              const ConfusionRates& confusion,
                              const StrengthMatrix& strengths, const Vec& priors,
                              const PerturbationParams& params);

// Residual of the expansion loss(u + eps*du) ~ loss(u) + eps*(q - y)'du at each
// eps. A correct first-order term leaves a quadratic remainder, so halving eps
// should quarter the error; ratios holds err[k+1]/err[k] for adjacent rows.
struct TaylorRow {
    double eps = 0.0;
    double err = 0.0;
};
struct TaylorTable {
    std::vector<TaylorRow> rows;
    std::vector<double> ratios;
};
TaylorTable taylor_check(const std::function<double(const Vec&)>& loss_fn, int label,
                         const Vec& u, const Vec& du, const std::vector<double>& eps_list);

// Variance of the projection dw . h over class y's feature cloud:
// dw' Sigma_y dw with dw = w_c - w_y.
double mapped_variance(const LinearHead& head, int c, int y, const Matrix& sigma_y);
double mapped_variance(const LinearHead& head, int c, int y, const Vec& var_y);

// Signed distance from mu_c to the c-vs-y decision boundary, bias omitted.
// raw = dw . mu_c is what the training penalty sees; normalized divides by
// ||dw|| to make it a geometric distance.
struct BoundaryDistance {
    double raw = 0.0;
    double normalized = 0.0;
};
BoundaryDistance boundary_distance(const LinearHead& head, int c, int y, const Vec& mu_c);

// Histogram of per-sample margins q_y - max_{c != y} q_c over 40 bins spanning
// [-1, 1], plus the share of correctly predicted samples whose margin is below
// 0.2 (the "barely right" fraction).
struct MarginHistogram {
    std::vector<double> bin_left;
    std::vector<int> count;
    int correct = 0;
    int total = 0;
    double small_margin_fraction = 0.0;
};
MarginHistogram margin_distribution(const Matrix& logits, const std::vector<int>& labels);

// CSV rows "bin_left,count" with a header line.
std::string margin_histogram_csv(const MarginHistogram& hist);

}  // namespace icda
