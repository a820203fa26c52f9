#include <benchmark/benchmark.h>

#include "icda/losses.hpp"
#include "icda/model.hpp"
#include "icda/numerics.hpp"
#include "icda/stats.hpp"
#include "icda/strength.hpp"

namespace {

using namespace icda;

struct Fixture {
    Matrix features;
    std::vector<int> labels;
    LinearHead head;
    ClassStats stats_full;
    ClassStats stats_diag;
    StrengthMatrix strengths;
    Vec priors;
    Matrix logits;

    Fixture(int classes, int h, int n)
        : features(static_cast<std::size_t>(n), static_cast<std::size_t>(h)),
          labels(static_cast<std::size_t>(n)),
          stats_full(classes, h, CovMode::full),
          stats_diag(classes, h, CovMode::diagonal),
          priors(static_cast<std::size_t>(classes), 1.0 / classes),
          logits(static_cast<std::size_t>(n), static_cast<std::size_t>(classes)) {
        Rng rng(42);
        for (double& x : features.data) x = rng.normal();
        for (int i = 0; i < n; ++i)
            labels[static_cast<std::size_t>(i)] = i % classes;
        head = make_head(classes, h, rng);
        stats_full.update(features, labels);
        stats_diag.update(features, labels);
        fill_alpha_matrix(strengths, features, head, labels);
        strengths.alpha_scalar = alpha_scalar_direct(features, head, labels);
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
            for (std::size_t c = 0; c < static_cast<std::size_t>(classes); ++c)
                logits(i, c) = dot(head.w.row(c), features.row(i),
                                   static_cast<std::size_t>(h)) + head.b[c];
    }
};

Fixture& fixture() {
    static Fixture f(10, 16, 64);
    return f;
}

void BM_IcdaLossFull(benchmark::State& state) {
    Fixture& f = fixture();
    for (auto _ : state) {
        IcdaEval e = icda_eval(f.features, f.labels, f.head, f.stats_full, f.strengths, 0.5, 0.1,
                               f.priors, false);
        benchmark::DoNotOptimize(e.loss);
    }
}
BENCHMARK(BM_IcdaLossFull);

void BM_IcdaLossDiagonal(benchmark::State& state) {
    Fixture& f = fixture();
    for (auto _ : state) {
        IcdaEval e = icda_eval(f.features, f.labels, f.head, f.stats_diag, f.strengths, 0.5, 0.1,
                               f.priors, false);
        benchmark::DoNotOptimize(e.loss);
    }
}
BENCHMARK(BM_IcdaLossDiagonal);

void BM_CeLoss(benchmark::State& state) {
    Fixture& f = fixture();
    for (auto _ : state) {
        LogitLoss k = ce_loss(f.logits, f.labels);
        benchmark::DoNotOptimize(k.loss);
    }
}
BENCHMARK(BM_CeLoss);

void BM_StatsUpdate(benchmark::State& state) {
    Fixture& f = fixture();
    ClassStats stats(10, 16, CovMode::full);
    for (auto _ : state) {
        stats.update(f.features, f.labels);
        benchmark::DoNotOptimize(stats.count(0));
    }
}
BENCHMARK(BM_StatsUpdate);

void BM_CholeskyPsd(benchmark::State& state) {
    Fixture& f = fixture();
    const Matrix& cov = f.stats_full.cov(0);
    for (auto _ : state) {
        Matrix chol = cholesky_psd(cov);
        benchmark::DoNotOptimize(chol.data.data());
    }
}
BENCHMARK(BM_CholeskyPsd);

void BM_SampleMvn(benchmark::State& state) {
    Fixture& f = fixture();
    Vec mean(16, 0.0);
    Rng rng(7);
    for (auto _ : state) {
        Vec draw = sample_mvn(mean, f.stats_full.cov(0), rng);
        benchmark::DoNotOptimize(draw.data());
    }
}
BENCHMARK(BM_SampleMvn);

void BM_AlphaMatrix(benchmark::State& state) {
    Fixture& f = fixture();
    StrengthMatrix s;
    for (auto _ : state) {
        fill_alpha_matrix(s, f.features, f.head, f.labels);
        benchmark::DoNotOptimize(s.alpha.data.data());
    }
}
BENCHMARK(BM_AlphaMatrix);

}  // namespace

BENCHMARK_MAIN();
