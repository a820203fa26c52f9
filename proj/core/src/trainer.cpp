#include "icda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "icda/check.hpp"
#include "icda/numerics.hpp"

namespace icda {

namespace {

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), static_cast<std::size_t>(src.cols));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        ICDA_REQUIRE(idx[r] < static_cast<std::size_t>(src.rows), "gather_rows: index out of range");
        const double* from = src.row(idx[r]);
        std::copy(from, from + src.cols, out.row(r));
    }
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
    std::vector<int> out(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) out[r] = labels[idx[r]];
    return out;
}

int argmax_row(const double* p, int n) {
    int best = 0;
    for (int c = 1; c < n; ++c)
        if (p[c] > p[best]) best = c;
    return best;
}

std::vector<int> predictions_of(const Matrix& logits) {
    std::vector<int> preds(static_cast<std::size_t>(logits.rows));
    for (std::size_t i = 0; i < static_cast<std::size_t>(logits.rows); ++i)
        preds[i] = argmax_row(logits.row(i), logits.cols);
    return preds;
}

double mean_of(const Vec& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

Vec strengths_for_mode(const TrainConfig& cfg, const Matrix& features,
                       const LinearHead& head, const std::vector<int>& labels) {
    if (cfg.alpha_mode == "direct") {
        if (cfg.icda.noise_mode)
            return alpha_scalar_noisy(features, head, labels, cfg.icda.tau);
        return alpha_scalar_direct(features, head, labels);
    }
    if (cfg.alpha_mode == "noisy")
        return alpha_scalar_noisy(features, head, labels, cfg.icda.tau);
    if (cfg.alpha_mode == "fixed")
        return Vec(static_cast<std::size_t>(features.rows), cfg.fixed_alpha);
    throw ConfigError("alpha_mode must be direct, noisy, or fixed; got '" + cfg.alpha_mode + "'");
}

// Per-batch loss value and analytic head/feature gradients. Logit losses go
// through the same accumulate_logit_grads assembly the feature losses use
// internally, so coinciding methods coincide bitwise.
struct StepGrads {
    double loss = 0.0;
    Matrix d_w;
    Vec d_b;
    Matrix d_features;
};

StepGrads from_feature_loss(FeatureLoss&& f) {
    StepGrads g;
    g.loss = f.loss;
    g.d_w = std::move(f.d_w);
    g.d_b = std::move(f.d_b);
    g.d_features = std::move(f.d_features);
    return g;
}

StepGrads method_gradients(const TrainConfig& cfg, const ForwardCache& cache,
                           const std::vector<int>& labels, const LinearHead& head,
                           const ClassStats& stats, const ConfusionRates& confusion,
                           const StrengthMatrix& strengths, int t, const Vec& priors) {
    if (cfg.method == "ce" || cfg.method == "la") {
        LogitLoss k = cfg.method == "ce" ? ce_loss(cache.logits, labels)
                                         : la_loss(cache.logits, labels, priors);
        HeadGrads hg = accumulate_logit_grads(k.d_logits, cache.features, head);
        StepGrads g;
        g.loss = k.loss;
        g.d_w = std::move(hg.d_w);
        g.d_b = std::move(hg.d_b);
        g.d_features = std::move(hg.d_features);
        return g;
    }
    if (cfg.method == "isda")
        return from_feature_loss(isda_loss(cache.features, labels, head, stats,
                                           lambda_at(t, cfg.iterations, cfg.icda.lambda0)));
    if (cfg.method == "risda") {
        // same linear warmup as the isda/icda lambda; full-strength quadratic
        // perturbations on week-one statistics blow up the head.
        double ramp_a = lambda_at(t, cfg.iterations, cfg.risda_alpha);
        double ramp_b = lambda_at(t, cfg.iterations, cfg.risda_beta);
        return from_feature_loss(risda_loss(cache.features, labels, head, stats, confusion,
                                            ramp_a, ramp_b));
    }
    if (cfg.method == "icda" || cfg.method == "meta_icda")
        return from_feature_loss(icda_loss(cache.features, labels, head, stats, strengths,
                                           cfg.icda, t, cfg.iterations, priors));
    throw ConfigError("unknown method '" + cfg.method + "'");
}

void apply_step(Backbone& bb, LinearHead& head, const ForwardCache& cache, StepGrads&& g,
                SgdState& sgd, const SgdConfig& opt, int t) {
    ModelGrads grads;
    grads.layers = backward_features(bb, cache, g.d_features);
    grads.d_w = std::move(g.d_w);
    grads.d_b = std::move(g.d_b);
    sgd_step(bb, head, grads, sgd, opt, t);
}

void check_train_inputs(const Dataset& train, const Dataset& test, const TrainConfig& cfg) {
    train.validate();
    test.validate();
    ICDA_REQUIRE(train.classes == test.classes, "train/test class count mismatch");
    ICDA_REQUIRE(train.dim() == test.dim(), "train/test feature dim mismatch");
    ICDA_REQUIRE(cfg.iterations >= 1, "iterations must be positive");
    ICDA_REQUIRE(cfg.batch_size >= 1, "batch_size must be positive");
    ICDA_REQUIRE(static_cast<std::size_t>(cfg.batch_size) <= train.n(),
                 "batch_size exceeds training set size");
    ICDA_REQUIRE(cfg.eval_every >= 1, "eval_every must be positive");
    ICDA_REQUIRE(!cfg.widths.empty(), "backbone needs at least one hidden layer");
}

double trace_lambda(const TrainConfig& cfg, int t) {
    if (cfg.method == "isda" || cfg.method == "icda" || cfg.method == "meta_icda")
        return lambda_at(t, cfg.iterations, cfg.icda.lambda0);
    return 0.0;
}

}  // namespace

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, Rng rng)
    : order_(n), batch_(batch_size), rng_(rng) {
    ICDA_REQUIRE(batch_size >= 1 && batch_size <= n, "BatchSampler: bad batch size");
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    pos_ = n;  // force a shuffle on the first call
}

const std::vector<std::size_t>& BatchSampler::next() {
    if (pos_ + batch_.size() > order_.size()) {
        shuffle(order_, rng_);
        pos_ = 0;
    }
    std::copy(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
              order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_.size()), batch_.begin());
    pos_ += batch_.size();
    return batch_;
}

Vec dataset_priors(const Dataset& d) {
    std::vector<std::size_t> counts = d.class_counts();
    Vec priors(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        ICDA_REQUIRE(counts[c] > 0, "dataset_priors: class with no samples");
        priors[c] = static_cast<double>(counts[c]) / static_cast<double>(d.n());
    }
    return priors;
}

std::vector<int> smallest_classes(const Dataset& d, int k) {
    ICDA_REQUIRE(k >= 0 && k <= d.classes, "smallest_classes: bad k");
    std::vector<std::size_t> counts = d.class_counts();
    std::vector<int> idx(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) idx[c] = static_cast<int>(c);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (counts[static_cast<std::size_t>(a)] != counts[static_cast<std::size_t>(b)])
            return counts[static_cast<std::size_t>(a)] < counts[static_cast<std::size_t>(b)];
        return a > b;
    });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

EvalRecord evaluate_split(const Backbone& bb, const LinearHead& head, const Dataset& d,
                          const std::vector<int>& tail_classes) {
    d.validate();
    ICDA_REQUIRE(d.n() > 0, "evaluate_split: empty split");
    ForwardCache cache = forward(bb, head, d.features);

    const int classes = d.classes;
    std::vector<int> class_total(static_cast<std::size_t>(classes), 0);
    std::vector<int> class_hit(static_cast<std::size_t>(classes), 0);
    std::vector<int> group_total;
    std::vector<int> group_hit;
    if (!d.groups.empty()) {
        int groups = 1 + *std::max_element(d.groups.begin(), d.groups.end());
        group_total.assign(static_cast<std::size_t>(groups), 0);
        group_hit.assign(static_cast<std::size_t>(groups), 0);
    }

    double loss = 0.0;
    int hits = 0;
    for (std::size_t i = 0; i < d.n(); ++i) {
        const double* row = cache.logits.row(i);
        const int y = d.labels[i];
        loss += log_sum_exp(row, classes) - row[y];
        const bool hit = argmax_row(row, classes) == y;
        hits += hit ? 1 : 0;
        ++class_total[static_cast<std::size_t>(y)];
        class_hit[static_cast<std::size_t>(y)] += hit ? 1 : 0;
        if (!d.groups.empty()) {
            ++group_total[static_cast<std::size_t>(d.groups[i])];
            group_hit[static_cast<std::size_t>(d.groups[i])] += hit ? 1 : 0;
        }
    }

    EvalRecord e;
    e.test_loss = loss / static_cast<double>(d.n());
    e.accuracy = static_cast<double>(hits) / static_cast<double>(d.n());
    e.per_class.assign(static_cast<std::size_t>(classes), 0.0);
    for (int c = 0; c < classes; ++c)
        if (class_total[static_cast<std::size_t>(c)] > 0)
            e.per_class[static_cast<std::size_t>(c)] =
                static_cast<double>(class_hit[static_cast<std::size_t>(c)]) /
                static_cast<double>(class_total[static_cast<std::size_t>(c)]);

    if (!tail_classes.empty()) {
        double s = 0.0;
        for (int c : tail_classes) {
            ICDA_REQUIRE(c >= 0 && c < classes, "evaluate_split: tail class out of range");
            s += e.per_class[static_cast<std::size_t>(c)];
        }
        e.tail_accuracy = s / static_cast<double>(tail_classes.size());
    }

    // Worst group when groups exist, worst class otherwise; empty cells skipped.
    double worst = 1.0;
    bool any = false;
    if (!d.groups.empty()) {
        for (std::size_t g = 0; g < group_total.size(); ++g) {
            if (group_total[g] == 0) continue;
            worst = std::min(worst, static_cast<double>(group_hit[g]) /
                                        static_cast<double>(group_total[g]));
            any = true;
        }
    } else {
        for (int c = 0; c < classes; ++c) {
            if (class_total[static_cast<std::size_t>(c)] == 0) continue;
            worst = std::min(worst, e.per_class[static_cast<std::size_t>(c)]);
            any = true;
        }
    }
    e.worst_group = any ? worst : 0.0;
    return e;
}

TrainReport train_model(const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                        Rng rng) {
    check_train_inputs(train, test, cfg);
    ICDA_REQUIRE(cfg.method == "ce" || cfg.method == "la" || cfg.method == "isda" ||
                     cfg.method == "risda" || cfg.method == "icda",
                 "train_model handles ce/la/isda/risda/icda; meta_icda needs run_meta_icda");

    Rng rng_init = rng.split("init");
    Rng rng_batches = rng.split("batches");

    Backbone bb = make_backbone(static_cast<int>(train.dim()), cfg.widths, rng_init);
    LinearHead head = make_head(train.classes, bb.out_dim(), rng_init);
    ClassStats stats(train.classes, bb.out_dim(), cfg.icda.cov_mode);
    ConfusionRates confusion(train.classes);
    const Vec priors = dataset_priors(train);
    const std::vector<int> tail = smallest_classes(train, std::min(cfg.tail_k, train.classes));
    SgdState sgd = make_sgd_state(bb, head);
    BatchSampler sampler(train.n(), static_cast<std::size_t>(cfg.batch_size), rng_batches);

    TrainReport rep;
    rep.method = cfg.method;
    rep.priors = priors;
    rep.tail_classes = tail;
    rep.trace.reserve(static_cast<std::size_t>(cfg.iterations));

    for (int t = 0; t < cfg.iterations; ++t) {
        const auto& idx = sampler.next();
        Matrix bx = gather_rows(train.features, idx);
        std::vector<int> by = gather_labels(train.labels, idx);

        ForwardCache cache = forward(bb, head, bx);
        stats.update(cache.features, by);
        if (cfg.method == "risda")
            confusion.update(predictions_of(cache.logits), by, cfg.confusion_decay);

        StrengthMatrix strengths;
        double mean_alpha = 0.0;
        if (cfg.method == "icda") {
            fill_alpha_matrix(strengths, cache.features, head, by);
            strengths.alpha_scalar = strengths_for_mode(cfg, cache.features, head, by);
            mean_alpha = mean_of(strengths.alpha_scalar);
        }

        StepGrads g = method_gradients(cfg, cache, by, head, stats, confusion, strengths, t, priors);
        const double batch_loss = g.loss;
        apply_step(bb, head, cache, std::move(g), sgd, cfg.sgd, t);

        rep.trace.push_back({t, lr_at(cfg.sgd, t), trace_lambda(cfg, t), batch_loss, mean_alpha, 0.0});
        if ((t + 1) % cfg.eval_every == 0 || t + 1 == cfg.iterations) {
            EvalRecord e = evaluate_split(bb, head, test, tail);
            e.iteration = t + 1;
            e.train_loss = batch_loss;
            rep.evals.push_back(std::move(e));
        }
    }

    rep.final_eval = rep.evals.back();
    rep.backbone = std::move(bb);
    rep.head = std::move(head);
    rep.stats = std::move(stats);
    rep.confusion = std::move(confusion);
    return rep;
}

TrainReport run_meta_icda(const Dataset& train, const Dataset& meta_set, const Dataset& test,
                          const TrainConfig& cfg, Rng rng) {
    check_train_inputs(train, test, cfg);
    meta_set.validate();
    ICDA_REQUIRE(meta_set.classes == train.classes, "meta split class count mismatch");
    ICDA_REQUIRE(meta_set.dim() == train.dim(), "meta split feature dim mismatch");
    ICDA_REQUIRE(cfg.meta_batch_size >= 1, "meta_batch_size must be positive");
    ICDA_REQUIRE(static_cast<std::size_t>(cfg.meta_batch_size) <= meta_set.n(),
                 "meta_batch_size exceeds meta split size");

    Rng rng_init = rng.split("init");
    Rng rng_batches = rng.split("batches");
    Rng rng_meta = rng.split("meta_batches");
    Rng rng_net = rng.split("net");

    Backbone bb = make_backbone(static_cast<int>(train.dim()), cfg.widths, rng_init);
    LinearHead head = make_head(train.classes, bb.out_dim(), rng_init);
    ClassStats stats(train.classes, bb.out_dim(), cfg.icda.cov_mode);
    ConfusionRates confusion(train.classes);
    const Vec priors = dataset_priors(train);
    const std::vector<int> tail = smallest_classes(train, std::min(cfg.tail_k, train.classes));
    SgdState sgd = make_sgd_state(bb, head);
    BatchSampler sampler(train.n(), static_cast<std::size_t>(cfg.batch_size), rng_batches);
    BatchSampler meta_sampler(meta_set.n(), static_cast<std::size_t>(cfg.meta_batch_size),
                              rng_meta);

    MetaState ms;
    ms.eta2 = cfg.eta2;
    ms.meta_batch_size = cfg.meta_batch_size;
    ms.tables = ClassEmaTables(train.classes);
    if (cfg.net_init == "zeros")
        ms.net = StrengthNet::zeros();
    else if (cfg.net_init == "random")
        ms.net = StrengthNet::random(rng_net);
    else
        throw ConfigError("net_init must be zeros or random; got '" + cfg.net_init + "'");

    const int classes = train.classes;
    const std::size_t h_dim = static_cast<std::size_t>(bb.out_dim());

    TrainReport rep;
    rep.method = "meta_icda";
    rep.priors = priors;
    rep.tail_classes = tail;
    rep.trace.reserve(static_cast<std::size_t>(cfg.iterations));

    std::vector<Characteristics> zetas(static_cast<std::size_t>(cfg.batch_size));
    std::vector<StrengthNetCache> caches(static_cast<std::size_t>(cfg.batch_size));

    for (int t = 0; t < cfg.iterations; ++t) {
        const auto& idx = sampler.next();
        Matrix bx = gather_rows(train.features, idx);
        std::vector<int> by = gather_labels(train.labels, idx);
        const auto& midx = meta_sampler.next();
        Matrix mx = gather_rows(meta_set.features, midx);
        std::vector<int> my = gather_labels(meta_set.labels, midx);

        ForwardCache cache = forward(bb, head, bx);
        stats.update(cache.features, by);

        // Characteristics from the unperturbed predictive state, EMA baselines
        // updated with this batch before extraction.
        const std::size_t n = by.size();
        Vec sample_losses(n);
        Vec sample_margins(n);
        std::vector<Vec> qs(n, Vec(static_cast<std::size_t>(classes)));
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = cache.logits.row(i);
            const int y = by[i];
            softmax(row, classes, qs[i].data());
            sample_losses[i] = log_sum_exp(row, classes) - row[y];
            double other = -1.0;
            for (int c = 0; c < classes; ++c)
                if (c != y) other = std::max(other, qs[i][static_cast<std::size_t>(c)]);
            sample_margins[i] = qs[i][static_cast<std::size_t>(y)] - other;
        }
        ms.tables.update(by, sample_losses, sample_margins);

        StrengthMatrix strengths;
        fill_alpha_matrix(strengths, cache.features, head, by);
        strengths.alpha_scalar.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            zetas[i] = squash_characteristics(extract_characteristics(
                qs[i], cache.features.row(i), h_dim, head, by[i], sample_losses[i], ms.tables,
                priors));
            caches[i] = strength_forward(ms.net, zetas[i]);
            strengths.alpha_scalar[i] = caches[i].alpha;
        }

        const double lambda = lambda_at(t, cfg.iterations, cfg.icda.lambda0);
        const double eta1 = lr_at(cfg.sgd, t);
        ms.eta1 = eta1;

        IcdaEval eval = icda_eval(cache.features, by, head, stats, strengths, lambda,
                                  cfg.icda.beta, priors, /*keep_meta=*/true);
        LinearHead vhead = virtual_step(head, eval.d_w, eval.d_b, eta1);
        ForwardCache mcache = forward(bb, vhead, mx);
        HeadGradient v = meta_ce_gradient(mcache.features, my, vhead);
        const double meta_loss = v.loss;

        if (cfg.eta2 != 0.0) {
            MetaChain chain = build_meta_chain(eval, cache.features, by, head, v, lambda,
                                               cfg.icda.beta, eta1);
            meta_update_omega(ms.net, chain, caches, cfg.eta2);
            StatsGradient sg = meta_stats_gradient(chain, by, head, v, strengths, stats);
            meta_update_stats(stats, sg, cfg.eta2);
            // Real step runs with the strengths the updated net now produces.
            for (std::size_t i = 0; i < n; ++i)
                strengths.alpha_scalar[i] = strength_forward(ms.net, zetas[i]).alpha;
        }

        StepGrads g = from_feature_loss(icda_loss(cache.features, by, head, stats, strengths,
                                                  cfg.icda, t, cfg.iterations, priors));
        const double batch_loss = g.loss;
        const double mean_alpha = mean_of(strengths.alpha_scalar);
        apply_step(bb, head, cache, std::move(g), sgd, cfg.sgd, t);

        rep.trace.push_back({t, eta1, lambda, batch_loss, mean_alpha, meta_loss});
        if ((t + 1) % cfg.eval_every == 0 || t + 1 == cfg.iterations) {
            EvalRecord e = evaluate_split(bb, head, test, tail);
            e.iteration = t + 1;
            e.train_loss = batch_loss;
            rep.evals.push_back(std::move(e));
        }
    }

    rep.final_eval = rep.evals.back();
    rep.backbone = std::move(bb);
    rep.head = std::move(head);
    rep.stats = std::move(stats);
    rep.confusion = std::move(confusion);
    return rep;
}

}  // namespace icda
