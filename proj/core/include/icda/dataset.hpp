#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "icda/linalg.hpp"
#include "icda/rng.hpp"

namespace icda {

// A labeled sample set. `groups` is populated only by generators that define
// subpopulations (class x attribute); everything else leaves it empty.
struct Dataset {
    Matrix features;              // N x D
    std::vector<int> labels;      // values in [0, C)
    std::vector<int> groups;      // empty, or one group id per sample
    int classes = 0;
    std::string split_tag = "train";

    std::size_t n() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }
    std::vector<std::size_t> class_counts() const;
    void validate() const;
};

struct ImbalanceProfile {
    double ratio = 1.0;  // n_max / n_min, >= 1
};

struct NoiseSpec {
    enum class Kind { uniform, pair_flip };
    Kind kind = Kind::uniform;
    double rate = 0.0;
};

// Balanced Gaussian classes with unit isotropic covariance. Means sit at
// separation * (vertices of a random orthonormal frame) when C <= D, at a
// randomly rotated regular simplex with the same pairwise spacing when
// C == D+1, and fall back to random unit-sphere directions (scaled by
// separation) when C > D+1 since no equidistant placement exists there.
Dataset make_gaussian_mixture(int classes, int dim, double separation, int n_per_class,
                              Rng& rng);

// Two Gaussians at +/- separation/2 along a random direction; the mean
// separation `d` gives Bayes accuracy Phi(d/2) per pair. Exposed so tests can
// reuse the generator's own decision rule.
double bayes_accuracy_nearest_mean(const Dataset& d, const std::vector<Vec>& means);

// The exact class means the generator used, re-derivable from the same seed.
std::vector<Vec> gaussian_mixture_means(int classes, int dim, double separation, Rng& rng);

struct SpuriousConfig {
    int d_signal = 5;
    int d_spur = 5;
    double train_group_ratio = 0.8;
    double test_group_ratio = 0.1;
    double label_flip = 0.25;
    int n_train = 8000;
    int n_test = 10000;
    double signal_scale = 1.0;
    double spur_scale = 1.0;
};

// Binary task with a class-signal feature block and a spurious-attribute
// block. Per sample: generating class g is uniform, the observed label y
// flips g with probability label_flip, and the attribute a agrees with y
// with probability group_ratio (train_group_ratio for train, test_group_ratio
// for test). The signal block encodes g, the spurious block encodes a, both
// as signed offsets plus unit Gaussian noise. groups[i] = 2*y + a.
std::pair<Dataset, Dataset> make_spurious(const SpuriousConfig& cfg, Rng& rng);

// Subsample to the exponential profile n_c = round(n_max * ratio^(-c/(C-1))).
// Class 0 keeps every sample; retained feature rows are copied bit-exactly.
Dataset apply_imbalance(const Dataset& d, const ImbalanceProfile& profile, Rng& rng);

// Corrupt labels in place according to the spec. Uniform noise redraws among
// the other C-1 classes; pair_flip sends c to (c+1) mod C.
std::vector<int> inject_noise(const std::vector<int>& labels, int classes,
                              const NoiseSpec& spec, Rng& rng);

// Remove per_class samples of every class into a meta split, disjoint from
// the remaining train split by construction.
std::pair<Dataset, Dataset> split_meta(const Dataset& d, int per_class, Rng& rng);

// Columnar text round-trip: a header line with N, D, C and flags, then one
// sample per line (features, label, optional group).
std::string dataset_to_text(const Dataset& d);
Dataset dataset_from_text(const std::string& text);

}  // namespace icda
