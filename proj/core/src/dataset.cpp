#include "icda/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace icda {

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
    for (int y : labels) counts[static_cast<std::size_t>(y)]++;
    return counts;
}

void Dataset::validate() const {
    ICDA_REQUIRE(n() > 0, "dataset is empty");
    ICDA_REQUIRE(features.rows == n(), "feature rows do not match label count");
    ICDA_REQUIRE(classes >= 2, "dataset needs at least two classes");
    for (int y : labels)
        ICDA_REQUIRE(y >= 0 && y < classes, "label out of range");
    ICDA_REQUIRE(groups.empty() || groups.size() == labels.size(),
                 "groups length does not match labels");
}

namespace {

// Random orthonormal columns via Gram-Schmidt on Gaussian draws. Re-draws on
// (astronomically unlikely) near-dependence.
std::vector<Vec> random_orthonormal(int count, int dim, Rng& rng) {
    std::vector<Vec> basis;
    while (static_cast<int>(basis.size()) < count) {
        Vec v(static_cast<std::size_t>(dim));
        for (double& x : v) x = rng.normal();
        for (const Vec& b : basis) {
            double proj = dot(v, b);
            axpy(-proj, b.data(), v.data(), v.size());
        }
        double nrm = norm2(v);
        if (nrm < 1e-8) continue;
        for (double& x : v) x /= nrm;
        basis.push_back(std::move(v));
    }
    return basis;
}

Vec random_unit(int dim, Rng& rng) {
    Vec v(static_cast<std::size_t>(dim));
    double nrm = 0.0;
    do {
        for (double& x : v) x = rng.normal();
        nrm = norm2(v);
    } while (nrm < 1e-8);
    for (double& x : v) x /= nrm;
    return v;
}

}  // namespace

std::vector<Vec> gaussian_mixture_means(int classes, int dim, double separation, Rng& rng) {
    ICDA_REQUIRE(classes >= 2, "make_gaussian_mixture: need C >= 2");
    ICDA_REQUIRE(dim >= 2, "make_gaussian_mixture: need D >= 2");
    ICDA_REQUIRE(separation > 0.0, "make_gaussian_mixture: separation must be positive");

    std::size_t c = static_cast<std::size_t>(classes);
    std::vector<Vec> means;
    if (classes <= dim) {
        means = random_orthonormal(classes, dim, rng);
        for (Vec& m : means)
            for (double& x : m) x *= separation;
    } else if (classes == dim + 1) {
        // Regular simplex keeping the same pairwise spacing separation*sqrt(2)
        // as the orthonormal placement: take a random orthonormal frame for
        // the first D vertices and add v = gamma*sum(q_k). With
        // gamma = (1 - sqrt(D+1))/D every pairwise distance equals sqrt(2).
        std::vector<Vec> frame = random_orthonormal(dim, dim, rng);
        double dd = static_cast<double>(dim);
        double gamma = (1.0 - std::sqrt(dd + 1.0)) / dd;
        Vec last(static_cast<std::size_t>(dim), 0.0);
        for (const Vec& q : frame) axpy(gamma, q.data(), last.data(), last.size());
        means = std::move(frame);
        means.push_back(std::move(last));
        for (Vec& m : means)
            for (double& x : m) x *= separation;
    } else {
        // No equidistant placement exists for C > D+1; use random unit-sphere
        // directions at radius `separation` instead.
        means.reserve(c);
        for (std::size_t i = 0; i < c; ++i) {
            Vec v = random_unit(dim, rng);
            for (double& x : v) x *= separation;
            means.push_back(std::move(v));
        }
    }
    return means;
}

Dataset make_gaussian_mixture(int classes, int dim, double separation, int n_per_class,
                              Rng& rng) {
    ICDA_REQUIRE(n_per_class > 0, "make_gaussian_mixture: need n_per_class > 0");
    std::vector<Vec> means = gaussian_mixture_means(classes, dim, separation, rng);

    Dataset d;
    d.classes = classes;
    std::size_t n = static_cast<std::size_t>(classes) * static_cast<std::size_t>(n_per_class);
    d.features = Matrix(n, static_cast<std::size_t>(dim));
    d.labels.resize(n);
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int k = 0; k < n_per_class; ++k, ++row) {
            double* x = d.features.row(row);
            const Vec& mu = means[static_cast<std::size_t>(c)];
            for (int j = 0; j < dim; ++j)
                x[j] = mu[static_cast<std::size_t>(j)] + rng.normal();
            d.labels[row] = c;
        }
    }
    return d;
}

double bayes_accuracy_nearest_mean(const Dataset& d, const std::vector<Vec>& means) {
    ICDA_REQUIRE(means.size() == static_cast<std::size_t>(d.classes),
                 "bayes_accuracy_nearest_mean: mean count mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.n(); ++i) {
        const double* x = d.features.row(i);
        int best = 0;
        double best_d2 = 0.0;
        for (std::size_t c = 0; c < means.size(); ++c) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < d.dim(); ++j) {
                double diff = x[j] - means[c][j];
                d2 += diff * diff;
            }
            if (c == 0 || d2 < best_d2) {
                best_d2 = d2;
                best = static_cast<int>(c);
            }
        }
        if (best == d.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(d.n());
}

std::pair<Dataset, Dataset> make_spurious(const SpuriousConfig& cfg, Rng& rng) {
    ICDA_REQUIRE(cfg.d_signal >= 1 && cfg.d_spur >= 1,
                 "make_spurious: need at least one dim per block");
    ICDA_REQUIRE(cfg.train_group_ratio > 0.0 && cfg.train_group_ratio < 1.0,
                 "make_spurious: train_group_ratio must be in (0,1)");
    ICDA_REQUIRE(cfg.test_group_ratio > 0.0 && cfg.test_group_ratio < 1.0,
                 "make_spurious: test_group_ratio must be in (0,1)");
    ICDA_REQUIRE(cfg.label_flip >= 0.0 && cfg.label_flip < 1.0,
                 "make_spurious: label_flip must be in [0,1)");

    auto generate = [&](int n, double group_ratio, const char* tag) {
        Dataset d;
        d.classes = 2;
        d.split_tag = tag;
        std::size_t dim = static_cast<std::size_t>(cfg.d_signal + cfg.d_spur);
        d.features = Matrix(static_cast<std::size_t>(n), dim);
        d.labels.resize(static_cast<std::size_t>(n));
        d.groups.resize(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
            int g = static_cast<int>(rng.next_below(2));
            int y = g;
            if (rng.next_double() < cfg.label_flip) y = 1 - y;
            int a = y;
            if (rng.next_double() >= group_ratio) a = 1 - a;
            double* x = d.features.row(i);
            double sig = cfg.signal_scale * (2.0 * g - 1.0);
            double spu = cfg.spur_scale * (2.0 * a - 1.0);
            for (int j = 0; j < cfg.d_signal; ++j) x[j] = sig + rng.normal();
            for (int j = 0; j < cfg.d_spur; ++j)
                x[cfg.d_signal + j] = spu + rng.normal();
            d.labels[i] = y;
            d.groups[i] = 2 * y + a;
        }
        return d;
    };

    Dataset train = generate(cfg.n_train, cfg.train_group_ratio, "train");
    Dataset test = generate(cfg.n_test, cfg.test_group_ratio, "test");
    return {std::move(train), std::move(test)};
}

Dataset apply_imbalance(const Dataset& d, const ImbalanceProfile& profile, Rng& rng) {
    ICDA_REQUIRE(profile.ratio >= 1.0, "apply_imbalance: ratio must be >= 1");
    d.validate();
    std::vector<std::size_t> counts = d.class_counts();
    std::size_t n_max = counts[0];
    int c_count = d.classes;

    // Per-class index pools, shuffled, then truncated to the profile.
    std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(c_count));
    for (std::size_t i = 0; i < d.n(); ++i)
        pools[static_cast<std::size_t>(d.labels[i])].push_back(i);

    std::vector<std::size_t> keep;
    for (int c = 0; c < c_count; ++c) {
        double expo = c_count > 1 ? static_cast<double>(c) / (c_count - 1) : 0.0;
        std::size_t target = static_cast<std::size_t>(
            std::llround(static_cast<double>(n_max) * std::pow(profile.ratio, -expo)));
        if (target < 1) target = 1;
        auto& pool = pools[static_cast<std::size_t>(c)];
        ICDA_REQUIRE(pool.size() >= target, "apply_imbalance: class too small for profile");
        if (c == 0 || target == pool.size()) {
            // Head class (and any class already at target) keeps every sample.
            keep.insert(keep.end(), pool.begin(), pool.end());
            continue;
        }
        shuffle(pool, rng);
        keep.insert(keep.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(target));
    }
    std::sort(keep.begin(), keep.end());

    Dataset out;
    out.classes = d.classes;
    out.split_tag = d.split_tag;
    out.features = Matrix(keep.size(), d.dim());
    out.labels.resize(keep.size());
    if (!d.groups.empty()) out.groups.resize(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        std::size_t src = keep[r];
        const double* from = d.features.row(src);
        double* to = out.features.row(r);
        std::copy(from, from + d.dim(), to);
        out.labels[r] = d.labels[src];
        if (!d.groups.empty()) out.groups[r] = d.groups[src];
    }
    return out;
}

std::vector<int> inject_noise(const std::vector<int>& labels, int classes,
                              const NoiseSpec& spec, Rng& rng) {
    ICDA_REQUIRE(spec.rate >= 0.0 && spec.rate < 1.0, "inject_noise: rate must be in [0,1)");
    ICDA_REQUIRE(classes >= 2, "inject_noise: need at least two classes");
    std::vector<int> out = labels;
    if (spec.rate == 0.0) return out;
    for (int& y : out) {
        if (rng.next_double() >= spec.rate) continue;
        if (spec.kind == NoiseSpec::Kind::pair_flip) {
            y = (y + 1) % classes;
        } else {
            // Uniform over the other C-1 classes, never the original label.
            int r = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes - 1)));
            y = r < y ? r : r + 1;
        }
    }
    return out;
}

std::pair<Dataset, Dataset> split_meta(const Dataset& d, int per_class, Rng& rng) {
    ICDA_REQUIRE(per_class >= 0, "split_meta: per_class must be nonnegative");
    d.validate();

    std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(d.classes));
    for (std::size_t i = 0; i < d.n(); ++i)
        pools[static_cast<std::size_t>(d.labels[i])].push_back(i);

    std::vector<bool> is_meta(d.n(), false);
    for (auto& pool : pools) {
        ICDA_REQUIRE(pool.size() >= static_cast<std::size_t>(per_class),
                     "split_meta: class has fewer samples than per_class");
        shuffle(pool, rng);
        for (int k = 0; k < per_class; ++k) is_meta[pool[static_cast<std::size_t>(k)]] = true;
    }

    auto build = [&](bool take_meta, const char* tag) {
        Dataset out;
        out.classes = d.classes;
        out.split_tag = tag;
        std::size_t n = 0;
        for (std::size_t i = 0; i < d.n(); ++i)
            if (is_meta[i] == take_meta) ++n;
        out.features = Matrix(n, d.dim());
        out.labels.resize(n);
        if (!d.groups.empty()) out.groups.resize(n);
        std::size_t r = 0;
        for (std::size_t i = 0; i < d.n(); ++i) {
            if (is_meta[i] != take_meta) continue;
            const double* from = d.features.row(i);
            std::copy(from, from + d.dim(), out.features.row(r));
            out.labels[r] = d.labels[i];
            if (!d.groups.empty()) out.groups[r] = d.groups[i];
            ++r;
        }
        return out;
    };

    Dataset train = build(false, d.split_tag.c_str());
    Dataset meta = build(true, "meta");
    if (per_class == 0) {
        // Meta split is legitimately empty; hand back a well-formed shell.
        meta.classes = d.classes;
        meta.features = Matrix(0, d.dim());
    }
    return {std::move(train), std::move(meta)};
}

std::string dataset_to_text(const Dataset& d) {
    std::ostringstream os;
    os << d.n() << ' ' << d.dim() << ' ' << d.classes << ' ' << (d.groups.empty() ? 0 : 1)
       << ' ' << d.split_tag << '\n';
    char buf[32];
    for (std::size_t i = 0; i < d.n(); ++i) {
        const double* x = d.features.row(i);
        for (std::size_t j = 0; j < d.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", x[j]);
            os << buf << ' ';
        }
        os << d.labels[i];
        if (!d.groups.empty()) os << ' ' << d.groups[i];
        os << '\n';
    }
    return os.str();
}

Dataset dataset_from_text(const std::string& text) {
    std::istringstream is(text);
    std::size_t n = 0, dim = 0;
    int classes = 0, has_groups = 0;
    std::string tag;
    is >> n >> dim >> classes >> has_groups >> tag;
    ICDA_REQUIRE(is.good() && n > 0 && dim > 0, "dataset_from_text: bad header");

    Dataset d;
    d.classes = classes;
    d.split_tag = tag;
    d.features = Matrix(n, dim);
    d.labels.resize(n);
    if (has_groups) d.groups.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double* x = d.features.row(i);
        for (std::size_t j = 0; j < dim; ++j) is >> x[j];
        is >> d.labels[i];
        if (has_groups) is >> d.groups[i];
    }
    ICDA_REQUIRE(!is.fail(), "dataset_from_text: truncated body");
    d.validate();
    return d;
}

}  // namespace icda
