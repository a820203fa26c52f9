#pragma once

#include <vector>

#include "icda/linalg.hpp"

namespace icda {

enum class CovMode { full, diagonal };

// Streaming per-class feature means and covariances under the population
// (divide-by-m) convention; only that convention makes the two-set merge
//   mu <- (n*mu + m*mu_b) / (n+m)
//   S  <- (n*S + m*S_b) / (n+m) + n*m/(n+m)^2 (mu - mu_b)(mu - mu_b)^T
// exact rather than approximate. Counts start at zero; the first batch a
// class appears in defines its statistics outright (the n=0 merge reduces to
// the batch values).
class ClassStats {
  public:
    ClassStats() = default;
    ClassStats(int classes, int feature_dim, CovMode mode);

    void update(const Matrix& features, const std::vector<int>& labels);

    int classes() const { return classes_; }
    int feature_dim() const { return dim_; }
    CovMode mode() const { return mode_; }

    double count(int c) const { return counts_[static_cast<std::size_t>(c)]; }
    double total_count() const;
    const Vec& mean(int c) const { return means_[static_cast<std::size_t>(c)]; }
    // Full mode only.
    const Matrix& cov(int c) const;
    // Diagonal mode only.
    const Vec& var(int c) const;

    // pi_c = n_c / sum_j n_j; requires at least one observed sample.
    Vec priors() const;

    // Mutable access for the meta-learned statistics updates, which replace
    // the running estimates in place.
    Vec& mutable_mean(int c) { return means_[static_cast<std::size_t>(c)]; }
    Matrix& mutable_cov(int c);
    Vec& mutable_var(int c);

    std::string to_bytes() const;
    static ClassStats from_bytes(const std::string& bytes);

  private:
    int classes_ = 0;
    int dim_ = 0;
    CovMode mode_ = CovMode::full;
    std::vector<double> counts_;
    std::vector<Vec> means_;
    std::vector<Matrix> covs_;  // full mode
    std::vector<Vec> vars_;     // diagonal mode
};

// EMA of per-class confusion rows: eps[y][c] tracks the fraction of class-y
// samples predicted as c. Rows of classes absent from a batch are untouched.
class ConfusionRates {
  public:
    ConfusionRates() = default;
    explicit ConfusionRates(int classes);

    void update(const std::vector<int>& predictions, const std::vector<int>& labels,
                double ema_decay);

    int classes() const { return classes_; }
    double rate(int y, int c) const { return eps_(static_cast<std::size_t>(y),
                                                  static_cast<std::size_t>(c)); }
    const Matrix& matrix() const { return eps_; }

  private:
    int classes_ = 0;
    Matrix eps_;
};

}  // namespace icda
