#include "icda/stats.hpp"

#include <cstdint>
#include <cstring>
#include <string>

#include "icda/check.hpp"

namespace icda {

ClassStats::ClassStats(int classes, int feature_dim, CovMode mode)
    : classes_(classes), dim_(feature_dim), mode_(mode) {
    ICDA_REQUIRE(classes >= 2, "ClassStats: need C >= 2");
    ICDA_REQUIRE(feature_dim >= 1, "ClassStats: need H >= 1");
    std::size_t c = static_cast<std::size_t>(classes);
    std::size_t h = static_cast<std::size_t>(feature_dim);
    counts_.assign(c, 0.0);
    means_.assign(c, Vec(h, 0.0));
    if (mode == CovMode::full)
        covs_.assign(c, Matrix(h, h));
    else
        vars_.assign(c, Vec(h, 0.0));
}

const Matrix& ClassStats::cov(int c) const {
    ICDA_REQUIRE(mode_ == CovMode::full, "ClassStats::cov: diagonal mode");
    return covs_[static_cast<std::size_t>(c)];
}

const Vec& ClassStats::var(int c) const {
    ICDA_REQUIRE(mode_ == CovMode::diagonal, "ClassStats::var: full mode");
    return vars_[static_cast<std::size_t>(c)];
}

Matrix& ClassStats::mutable_cov(int c) {
    ICDA_REQUIRE(mode_ == CovMode::full, "ClassStats::mutable_cov: diagonal mode");
    return covs_[static_cast<std::size_t>(c)];
}

Vec& ClassStats::mutable_var(int c) {
    ICDA_REQUIRE(mode_ == CovMode::diagonal, "ClassStats::mutable_var: full mode");
    return vars_[static_cast<std::size_t>(c)];
}

double ClassStats::total_count() const {
    double t = 0.0;
    for (double n : counts_) t += n;
    return t;
}

void ClassStats::update(const Matrix& features, const std::vector<int>& labels) {
    ICDA_REQUIRE(features.rows == labels.size(), "update_stats: rows/labels mismatch");
    ICDA_REQUIRE(features.cols == static_cast<std::size_t>(dim_),
                 "update_stats: feature dim mismatch");
    std::size_t h = static_cast<std::size_t>(dim_);

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes_));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ICDA_REQUIRE(labels[i] >= 0 && labels[i] < classes_, "update_stats: label out of range");
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }

    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& idx = by_class[c];
        if (idx.empty()) continue;
        double m = static_cast<double>(idx.size());

        Vec mu_b(h, 0.0);
        for (std::size_t i : idx) axpy(1.0, features.row(i), mu_b.data(), h);
        for (double& v : mu_b) v /= m;

        double n = counts_[c];
        double nm = n + m;
        Vec& mu = means_[c];
        Vec diff(h);
        for (std::size_t j = 0; j < h; ++j) diff[j] = mu[j] - mu_b[j];
        double cross = n * m / (nm * nm);

        if (mode_ == CovMode::full) {
            Matrix cov_b(h, h);
            for (std::size_t i : idx) {
                const double* x = features.row(i);
                for (std::size_t a = 0; a < h; ++a) {
                    double da = x[a] - mu_b[a];
                    if (da == 0.0) continue;
                    double* row = cov_b.row(a);
                    for (std::size_t b = 0; b < h; ++b) row[b] += da * (x[b] - mu_b[b]);
                }
            }
            for (double& v : cov_b.data) v /= m;

            Matrix& cov = covs_[c];
            for (std::size_t a = 0; a < h; ++a)
                for (std::size_t b = 0; b < h; ++b)
                    cov(a, b) = (n * cov(a, b) + m * cov_b(a, b)) / nm +
                                cross * diff[a] * diff[b];
        } else {
            Vec var_b(h, 0.0);
            for (std::size_t i : idx) {
                const double* x = features.row(i);
                for (std::size_t a = 0; a < h; ++a) {
                    double da = x[a] - mu_b[a];
                    var_b[a] += da * da;
                }
            }
            for (double& v : var_b) v /= m;

            Vec& var = vars_[c];
            for (std::size_t a = 0; a < h; ++a)
                var[a] = (n * var[a] + m * var_b[a]) / nm + cross * diff[a] * diff[a];
        }

        for (std::size_t j = 0; j < h; ++j) mu[j] = (n * mu[j] + m * mu_b[j]) / nm;
        counts_[c] = nm;
    }
}

Vec ClassStats::priors() const {
    double total = total_count();
    ICDA_REQUIRE(total > 0.0, "priors: no samples observed yet");
    Vec pi(counts_.size());
    for (std::size_t c = 0; c < counts_.size(); ++c) pi[c] = counts_[c] / total;
    return pi;
}

namespace {

constexpr char kStatsMagic[8] = {'I', 'C', 'D', 'A', 'S', 'T', 'A', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_doubles(std::string& out, const double* data, std::size_t n) {
    out.append(reinterpret_cast<const char*>(data), n * sizeof(double));
}

std::uint32_t get_u32(const std::string& bytes, std::size_t& pos) {
    ICDA_REQUIRE(pos + 4 <= bytes.size(), "stats blob: truncated");
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
}

void get_doubles(const std::string& bytes, std::size_t& pos, double* data, std::size_t n) {
    std::size_t needed = n * sizeof(double);
    ICDA_REQUIRE(pos + needed <= bytes.size(), "stats blob: truncated");
    std::memcpy(data, bytes.data() + pos, needed);
    pos += needed;
}

}  // namespace

std::string ClassStats::to_bytes() const {
    std::string out;
    out.append(kStatsMagic, sizeof kStatsMagic);
    put_u32(out, 1);  // version
    put_u32(out, static_cast<std::uint32_t>(classes_));
    put_u32(out, static_cast<std::uint32_t>(dim_));
    put_u32(out, mode_ == CovMode::full ? 0 : 1);
    put_doubles(out, counts_.data(), counts_.size());
    for (const Vec& mu : means_) put_doubles(out, mu.data(), mu.size());
    if (mode_ == CovMode::full)
        for (const Matrix& cov : covs_) put_doubles(out, cov.data.data(), cov.data.size());
    else
        for (const Vec& var : vars_) put_doubles(out, var.data(), var.size());
    return out;
}

ClassStats ClassStats::from_bytes(const std::string& bytes) {
    ICDA_REQUIRE(bytes.size() > sizeof(kStatsMagic) &&
                     std::memcmp(bytes.data(), kStatsMagic, sizeof kStatsMagic) == 0,
                 "stats blob: bad magic");
    std::size_t pos = sizeof kStatsMagic;
    std::uint32_t version = get_u32(bytes, pos);
    ICDA_REQUIRE(version == 1, "stats blob: unsupported version");
    int classes = static_cast<int>(get_u32(bytes, pos));
    int dim = static_cast<int>(get_u32(bytes, pos));
    CovMode mode = get_u32(bytes, pos) == 0 ? CovMode::full : CovMode::diagonal;

    ClassStats st(classes, dim, mode);
    get_doubles(bytes, pos, st.counts_.data(), st.counts_.size());
    for (Vec& mu : st.means_) get_doubles(bytes, pos, mu.data(), mu.size());
    if (mode == CovMode::full)
        for (Matrix& cov : st.covs_) get_doubles(bytes, pos, cov.data.data(), cov.data.size());
    else
        for (Vec& var : st.vars_) get_doubles(bytes, pos, var.data(), var.size());
    ICDA_REQUIRE(pos == bytes.size(), "stats blob: trailing bytes");
    return st;
}

ConfusionRates::ConfusionRates(int classes) : classes_(classes) {
    ICDA_REQUIRE(classes >= 2, "ConfusionRates: need C >= 2");
    eps_ = Matrix(static_cast<std::size_t>(classes), static_cast<std::size_t>(classes));
}

void ConfusionRates::update(const std::vector<int>& predictions,
                            const std::vector<int>& labels, double ema_decay) {
    ICDA_REQUIRE(predictions.size() == labels.size(), "update_confusion: length mismatch");
    ICDA_REQUIRE(ema_decay > 0.0 && ema_decay <= 1.0, "update_confusion: decay must be in (0,1]");
    std::size_t c_count = static_cast<std::size_t>(classes_);

    Matrix batch(c_count, c_count);
    std::vector<double> row_n(c_count, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int y = labels[i];
        int p = predictions[i];
        ICDA_REQUIRE(y >= 0 && y < classes_ && p >= 0 && p < classes_,
                     "update_confusion: class out of range");
        batch(static_cast<std::size_t>(y), static_cast<std::size_t>(p)) += 1.0;
        row_n[static_cast<std::size_t>(y)] += 1.0;
    }
    for (std::size_t y = 0; y < c_count; ++y) {
        if (row_n[y] == 0.0) continue;  // class absent from batch: row untouched
        for (std::size_t c = 0; c < c_count; ++c) {
            double rate = batch(y, c) / row_n[y];
            eps_(y, c) = (1.0 - ema_decay) * eps_(y, c) + ema_decay * rate;
        }
    }
}

}  // namespace icda
