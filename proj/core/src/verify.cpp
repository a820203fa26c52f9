#include "icda/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "icda/check.hpp"
#include "icda/diagnostics.hpp"
#include "icda/harness.hpp"
#include "icda/losses.hpp"
#include "icda/model.hpp"
#include "icda/numerics.hpp"
#include "icda/oracle.hpp"

namespace icda {

namespace {

constexpr double kGradTol = 1e-5;
constexpr double kBoundSigma = 3.0;
constexpr double kBoundEqTol = 1e-10;
constexpr double kReduceTol = 1e-12;
constexpr double kStatsTol = 1e-10;
constexpr double kPenaltyTieTol = 1e-10;
constexpr double kTaylorCenter = 0.25;
constexpr double kTaylorSlack = 0.05;

void add_failure(SuiteResult& r, const std::string& note) {
    ++r.failures;
    if (r.notes.size() < 20) r.notes.push_back(note);
}

struct Instance {
    Matrix features;  // N x H, feature space directly
    std::vector<int> labels;
    LinearHead head;
    ClassStats stats;
    ConfusionRates confusion;
    StrengthMatrix strengths;
    Vec priors;
};

Instance make_instance(Rng& rng, int classes, int h, int n, CovMode mode) {
    Instance inst{Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(h)),
                  std::vector<int>(static_cast<std::size_t>(n)),
                  LinearHead{},
                  ClassStats(classes, h, mode),
                  ConfusionRates(classes),
                  StrengthMatrix{},
                  Vec(static_cast<std::size_t>(classes))};
    for (double& x : inst.features.data) x = rng.normal();
    for (int i = 0; i < n; ++i)
        inst.labels[static_cast<std::size_t>(i)] =
            i < classes ? i : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes)));
    inst.head = make_head(classes, h, rng);

    // Per-class clouds with distinct means and spreads feed the statistics.
    const int per_class = 12;
    Matrix cloud(static_cast<std::size_t>(classes * per_class), static_cast<std::size_t>(h));
    std::vector<int> cloud_labels(static_cast<std::size_t>(classes * per_class));
    for (int c = 0; c < classes; ++c) {
        Vec center(static_cast<std::size_t>(h));
        for (double& x : center) x = 1.5 * rng.normal();
        const double spread = 0.5 + rng.next_double();
        for (int k = 0; k < per_class; ++k) {
            const std::size_t row = static_cast<std::size_t>(c * per_class + k);
            cloud_labels[row] = c;
            double* p = cloud.row(row);
            for (int a = 0; a < h; ++a)
                p[a] = center[static_cast<std::size_t>(a)] + spread * rng.normal();
        }
    }
    inst.stats.update(cloud, cloud_labels);

    // A couple of noisy prediction rounds make the confusion rates nonuniform.
    for (int round = 0; round < 2; ++round) {
        std::vector<int> preds(cloud_labels.size());
        for (std::size_t i = 0; i < preds.size(); ++i)
            preds[i] = rng.next_double() < 0.6
                           ? cloud_labels[i]
                           : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes)));
        inst.confusion.update(preds, cloud_labels, 0.1);
    }

    fill_alpha_matrix(inst.strengths, inst.features, inst.head, inst.labels);
    inst.strengths.alpha_scalar = alpha_scalar_direct(inst.features, inst.head, inst.labels);

    double total = 0.0;
    for (double& p : inst.priors) {
        p = rng.uniform(0.5, 1.5);
        total += p;
    }
    for (double& p : inst.priors) p /= total;
    return inst;
}

Matrix logits_of(const Matrix& features, const LinearHead& head) {
    const std::size_t n = static_cast<std::size_t>(features.rows);
    const std::size_t classes = static_cast<std::size_t>(head.w.rows);
    Matrix logits(n, classes);
    for (std::size_t i = 0; i < n; ++i) {
        const double* h = features.row(i);
        for (std::size_t c = 0; c < classes; ++c)
            logits(i, c) = dot(head.w.row(c), h, static_cast<std::size_t>(head.w.cols)) +
                           head.b[c];
    }
    return logits;
}

// Scalar loss with statistics, strengths, confusion, and priors held fixed;
// the quantity finite differences are taken of.
double loss_value(const std::string& method, const Instance& inst, const Matrix& features,
                  const LinearHead& head, double lambda, double beta) {
    if (method == "ce") return ce_loss(logits_of(features, head), inst.labels).loss;
    if (method == "la") return la_loss(logits_of(features, head), inst.labels, inst.priors).loss;
    if (method == "isda")
        return isda_loss(features, inst.labels, head, inst.stats, lambda).loss;
    if (method == "risda")
        return risda_loss(features, inst.labels, head, inst.stats, inst.confusion, 0.5, 0.5).loss;
    if (method == "icda")
        return icda_eval(features, inst.labels, head, inst.stats, inst.strengths, lambda, beta,
                         inst.priors, false)
            .loss;
    throw ContractViolation("loss_value: unknown method " + method);
}

struct AnalyticGrads {
    double loss = 0.0;
    Matrix d_w;
    Vec d_b;
    Matrix d_features;
};

AnalyticGrads analytic_grads(const std::string& method, const Instance& inst, double lambda,
                             double beta) {
    AnalyticGrads out;
    if (method == "ce" || method == "la") {
        Matrix logits = logits_of(inst.features, inst.head);
        LogitLoss k = method == "ce" ? ce_loss(logits, inst.labels)
                                     : la_loss(logits, inst.labels, inst.priors);
        HeadGrads hg = accumulate_logit_grads(k.d_logits, inst.features, inst.head);
        out.loss = k.loss;
        out.d_w = std::move(hg.d_w);
        out.d_b = std::move(hg.d_b);
        out.d_features = std::move(hg.d_features);
        return out;
    }
    if (method == "icda") {
        IcdaEval e = icda_eval(inst.features, inst.labels, inst.head, inst.stats, inst.strengths,
                               lambda, beta, inst.priors, false);
        out.loss = e.loss;
        out.d_w = std::move(e.d_w);
        out.d_b = std::move(e.d_b);
        out.d_features = std::move(e.d_features);
        return out;
    }
    FeatureLoss f = method == "isda"
                        ? isda_loss(inst.features, inst.labels, inst.head, inst.stats, lambda)
                        : risda_loss(inst.features, inst.labels, inst.head, inst.stats,
                                     inst.confusion, 0.5, 0.5);
    out.loss = f.loss;
    out.d_w = std::move(f.d_w);
    out.d_b = std::move(f.d_b);
    out.d_features = std::move(f.d_features);
    return out;
}

double block_deviation(const std::vector<double>& analytic, const std::vector<double>& fd) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        num = std::max(num, std::abs(analytic[i] - fd[i]));
        den = std::max({den, std::abs(analytic[i]), std::abs(fd[i])});
    }
    return num / std::max(den, 1e-12);
}

std::string fmtd(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

}  // namespace

SuiteResult verify_gradients(const VerifyOptions& opt) {
    SuiteResult res;
    res.suite = "gradients";
    res.tolerance = kGradTol;
    Rng root = Rng(opt.seed).split("gradients");
    const int classes = 4, h = 6, n = 8;
    const double lambda = 0.5, beta = 0.1;
    const char* methods[] = {"ce", "la", "isda", "risda", "icda"};

    for (int i = 0; i < opt.grad_instances; ++i) {
        Rng rng = root.split(static_cast<std::uint64_t>(i));
        const CovMode mode = i % 2 == 0 ? CovMode::full : CovMode::diagonal;
        Instance inst = make_instance(rng, classes, h, n, mode);

        for (const char* method : methods) {
            AnalyticGrads an = analytic_grads(method, inst, lambda, beta);

            std::vector<double> fd_w, fd_b, fd_f;
            for (std::size_t e = 0; e < inst.head.w.data.size(); ++e) {
                LinearHead hp = inst.head;
                const double step = 1e-5 * std::max(1.0, std::abs(hp.w.data[e]));
                hp.w.data[e] += step;
                const double up = loss_value(method, inst, inst.features, hp, lambda, beta);
                hp.w.data[e] -= 2.0 * step;
                const double dn = loss_value(method, inst, inst.features, hp, lambda, beta);
                fd_w.push_back((up - dn) / (2.0 * step));
            }
            for (std::size_t e = 0; e < inst.head.b.size(); ++e) {
                LinearHead hp = inst.head;
                const double step = 1e-5 * std::max(1.0, std::abs(hp.b[e]));
                hp.b[e] += step;
                const double up = loss_value(method, inst, inst.features, hp, lambda, beta);
                hp.b[e] -= 2.0 * step;
                const double dn = loss_value(method, inst, inst.features, hp, lambda, beta);
                fd_b.push_back((up - dn) / (2.0 * step));
            }
            for (std::size_t e = 0; e < inst.features.data.size(); ++e) {
                Matrix fp = inst.features;
                const double step = 1e-5 * std::max(1.0, std::abs(fp.data[e]));
                fp.data[e] += step;
                const double up = loss_value(method, inst, fp, inst.head, lambda, beta);
                fp.data[e] -= 2.0 * step;
                const double dn = loss_value(method, inst, fp, inst.head, lambda, beta);
                fd_f.push_back((up - dn) / (2.0 * step));
            }

            const double dev_w = block_deviation(an.d_w.data, fd_w);
            const double dev_b = block_deviation(an.d_b, fd_b);
            const double dev_f = block_deviation(an.d_features.data, fd_f);
            for (auto [tag, dev] : {std::pair<const char*, double>{"w", dev_w},
                                    {"b", dev_b},
                                    {"features", dev_f}}) {
                ++res.checks;
                res.worst_error = std::max(res.worst_error, dev);
                if (!(dev < kGradTol))
                    add_failure(res, std::string(method) + "/" + tag + " instance " +
                                         std::to_string(i) + ": deviation " + fmtd(dev));
            }
        }
    }
    return res;
}

SuiteResult verify_bound(const VerifyOptions& opt) {
    SuiteResult res;
    res.suite = "bound";
    res.tolerance = kBoundSigma;
    Rng root = Rng(opt.seed).split("bound");
    const int classes = 4, h = 5, n = 5;
    const double lambdas[] = {0.1, 0.25, 0.5, 0.75, 1.0};

    for (int i = 0; i < opt.bound_instances; ++i) {
        Rng rng = root.split(static_cast<std::uint64_t>(i));
        const CovMode mode = i % 2 == 0 ? CovMode::full : CovMode::diagonal;
        Instance inst = make_instance(rng, classes, h, n, mode);

        for (double lambda : lambdas) {
            Rng draw_rng = rng.split(static_cast<std::uint64_t>(1000 + int(lambda * 100)));
            McResult mc = mc_expected_loss(inst.features, inst.labels, inst.head, inst.stats,
                                           inst.strengths, lambda, opt.bound_draws, inst.priors,
                                           draw_rng);
            const double bound = surrogate_upper_bound(inst.features, inst.labels, inst.head,
                                                       inst.stats, inst.strengths, lambda,
                                                       inst.priors);
            ++res.checks;
            if (mc.se > 0.0) {
                const double z = (mc.estimate - bound) / mc.se;
                res.worst_error = std::max(res.worst_error, z);
                if (!(mc.estimate - bound <= kBoundSigma * mc.se))
                    add_failure(res, "instance " + std::to_string(i) + " lambda " + fmtd(lambda) +
                                         ": mc exceeds bound by " + fmtd(z) + " se");
            } else if (!(std::abs(mc.estimate - bound) <= kBoundEqTol)) {
                add_failure(res, "instance " + std::to_string(i) + " lambda " + fmtd(lambda) +
                                     ": zero-variance case off by " +
                                     fmtd(std::abs(mc.estimate - bound)));
            }
        }

        // Jensen's gap closes at lambda = 0: both sides are the plain loss.
        Rng draw_rng = rng.split(static_cast<std::uint64_t>(999));
        McResult mc0 = mc_expected_loss(inst.features, inst.labels, inst.head, inst.stats,
                                        inst.strengths, 0.0, 8, inst.priors, draw_rng);
        const double bound0 = surrogate_upper_bound(inst.features, inst.labels, inst.head,
                                                    inst.stats, inst.strengths, 0.0, inst.priors);
        ++res.checks;
        const double gap = std::abs(mc0.estimate - bound0);
        res.worst_error = std::max(res.worst_error, gap);
        if (!(gap <= kBoundEqTol))
            add_failure(res, "instance " + std::to_string(i) + ": lambda 0 gap " + fmtd(gap));
    }
    return res;
}

SuiteResult verify_reductions(const VerifyOptions& opt) {
    SuiteResult res;
    res.suite = "reductions";
    res.tolerance = kReduceTol;
    Rng root = Rng(opt.seed).split("reductions");
    const int h = 6, n = 8;

    for (int i = 0; i < opt.reduction_instances; ++i) {
        Rng rng = root.split(static_cast<std::uint64_t>(i));
        const int classes = 4 + (i % 2);
        const CovMode mode = i % 2 == 0 ? CovMode::full : CovMode::diagonal;
        Instance inst = make_instance(rng, classes, h, n, mode);
        Matrix logits = logits_of(inst.features, inst.head);
        const Vec uniform(static_cast<std::size_t>(classes), 1.0 / classes);

        // Prior-shift reduction: zero strength and margin weight leave only
        // the prior term, so loss and every gradient coincide.
        {
            IcdaEval e = icda_eval(inst.features, inst.labels, inst.head, inst.stats,
                                   inst.strengths, 0.0, 0.0, inst.priors, false);
            LogitLoss k = la_loss(logits, inst.labels, inst.priors);
            HeadGrads hg = accumulate_logit_grads(k.d_logits, inst.features, inst.head);
            double dev = std::abs(e.loss - k.loss);
            dev = std::max(dev, max_abs_diff(e.d_w, hg.d_w));
            dev = std::max(dev, max_abs_diff(e.d_b, hg.d_b));
            dev = std::max(dev, max_abs_diff(e.d_features, hg.d_features));
            ++res.checks;
            res.worst_error = std::max(res.worst_error, dev);
            if (!(dev <= kReduceTol))
                add_failure(res, "prior-shift reduction instance " + std::to_string(i) + ": " +
                                     fmtd(dev));
        }

        // Variance-only reduction: zero alpha matrix and uniform priors leave
        // the quadratic term only.
        {
            StrengthMatrix off = inst.strengths;
            off.alpha.fill(0.0);
            off.alpha_hat.fill(0.0);
            std::fill(off.alpha_scalar.begin(), off.alpha_scalar.end(), 0.0);
            const double lambda = 0.7;
            IcdaEval e = icda_eval(inst.features, inst.labels, inst.head, inst.stats, off, lambda,
                                   0.0, uniform, false);
            FeatureLoss f = isda_loss(inst.features, inst.labels, inst.head, inst.stats, lambda);
            double dev = std::abs(e.loss - f.loss);
            dev = std::max(dev, max_abs_diff(e.d_w, f.d_w));
            dev = std::max(dev, max_abs_diff(e.d_b, f.d_b));
            dev = std::max(dev, max_abs_diff(e.d_features, f.d_features));
            ++res.checks;
            res.worst_error = std::max(res.worst_error, dev);
            if (!(dev <= kReduceTol))
                add_failure(res, "variance-only reduction instance " + std::to_string(i) + ": " +
                                     fmtd(dev));
        }

        // Uniform priors erase the prior shift entirely.
        {
            LogitLoss a = la_loss(logits, inst.labels, uniform);
            LogitLoss b = ce_loss(logits, inst.labels);
            double dev = std::abs(a.loss - b.loss);
            dev = std::max(dev, max_abs_diff(a.d_logits, b.d_logits));
            ++res.checks;
            res.worst_error = std::max(res.worst_error, dev);
            if (!(dev <= kReduceTol))
                add_failure(res, "uniform-prior reduction instance " + std::to_string(i) + ": " +
                                     fmtd(dev));
        }

        // Penalty-level reduction, component-wise.
        {
            PerturbationParams off_params;
            off_params.lambda = 0.0;
            off_params.beta = 0.0;
            RegularizerReport ri = regularizer("icda", logits, inst.features, inst.labels,
                                               inst.head, inst.stats, inst.confusion,
                                               inst.strengths, inst.priors, off_params);
            RegularizerReport rl = regularizer("la", logits, inst.features, inst.labels, inst.head,
                                               inst.stats, inst.confusion, inst.strengths,
                                               inst.priors, off_params);
            double dev = std::abs(ri.total - rl.total);
            dev = std::max(dev, std::abs(ri.margin_term - rl.margin_term));
            dev = std::max(dev, std::abs(ri.mapped_variance_term - rl.mapped_variance_term));
            dev = std::max(dev, std::abs(ri.boundary_term - rl.boundary_term));
            dev = std::max(dev, std::abs(ri.delta_term - rl.delta_term));
            ++res.checks;
            res.worst_error = std::max(res.worst_error, dev);
            if (!(dev <= kReduceTol))
                add_failure(res, "penalty reduction instance " + std::to_string(i) + ": " +
                                     fmtd(dev));
        }
    }

    // Fifty-iteration trajectory: the prior-shift special case must follow the
    // identical parameter path bit for bit.
    {
        ExperimentConfig cfg;
        cfg.dataset.classes = 4;
        cfg.dataset.dim = 8;
        cfg.dataset.separation = 2.5;
        cfg.dataset.n_per_class = 60;
        cfg.dataset.test_per_class = 20;
        cfg.train.widths = {16, 8};
        cfg.train.iterations = 50;
        cfg.train.batch_size = 32;
        cfg.train.eval_every = 50;
        cfg.seeds = {7};

        cfg.train.method = "la";
        TrainReport la_rep = run_single(cfg, 7);

        cfg.train.method = "icda";
        cfg.train.icda.lambda0 = 0.0;
        cfg.train.icda.beta = 0.0;
        TrainReport icda_rep = run_single(cfg, 7);

        ++res.checks;
        const bool same =
            checkpoint_to_bytes(la_rep.backbone, la_rep.head) ==
                checkpoint_to_bytes(icda_rep.backbone, icda_rep.head) &&
            la_rep.final_eval.accuracy == icda_rep.final_eval.accuracy &&
            la_rep.final_eval.test_loss == icda_rep.final_eval.test_loss;
        if (!same) add_failure(res, "50-iteration trajectory diverged from the prior-shift run");
    }
    return res;
}

SuiteResult verify_stats(const VerifyOptions& opt) {
    SuiteResult res;
    res.suite = "stats";
    res.tolerance = kStatsTol;
    Rng root = Rng(opt.seed).split("stats");

    for (int trial = 0; trial < opt.stats_trials; ++trial) {
        Rng rng = root.split(static_cast<std::uint64_t>(trial));
        const int classes = 2 + trial % 4;
        const int h = 3 + trial % 6;
        const int n = 40 + static_cast<int>(rng.next_below(160));
        const CovMode mode = trial % 2 == 0 ? CovMode::full : CovMode::diagonal;

        Matrix features(static_cast<std::size_t>(n), static_cast<std::size_t>(h));
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            labels[static_cast<std::size_t>(i)] =
                i < classes ? i
                            : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes)));
            double* p = features.row(static_cast<std::size_t>(i));
            for (int a = 0; a < h; ++a)
                p[a] = rng.normal() * (1.0 + 0.3 * labels[static_cast<std::size_t>(i)]) +
                       0.7 * labels[static_cast<std::size_t>(i)];
        }

        // Random 5-way partition streamed chunk by chunk.
        std::vector<int> chunk_of(static_cast<std::size_t>(n));
        for (auto& c : chunk_of) c = static_cast<int>(rng.next_below(5));
        ClassStats streamed(classes, h, mode);
        for (int chunk = 0; chunk < 5; ++chunk) {
            std::vector<std::size_t> idx;
            for (int i = 0; i < n; ++i)
                if (chunk_of[static_cast<std::size_t>(i)] == chunk)
                    idx.push_back(static_cast<std::size_t>(i));
            if (idx.empty()) continue;
            Matrix part(idx.size(), static_cast<std::size_t>(h));
            std::vector<int> part_labels(idx.size());
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const double* from = features.row(idx[r]);
                std::copy(from, from + h, part.row(r));
                part_labels[r] = labels[idx[r]];
            }
            streamed.update(part, part_labels);
        }

        // Pooled direct computation, population convention.
        double dev = 0.0;
        for (int c = 0; c < classes; ++c) {
            std::vector<std::size_t> members;
            for (int i = 0; i < n; ++i)
                if (labels[static_cast<std::size_t>(i)] == c)
                    members.push_back(static_cast<std::size_t>(i));
            ICDA_REQUIRE(streamed.count(c) == static_cast<double>(members.size()),
                         "streamed count mismatch");
            if (members.empty()) continue;
            const double m = static_cast<double>(members.size());
            Vec mean(static_cast<std::size_t>(h), 0.0);
            for (auto i : members) {
                const double* p = features.row(i);
                for (int a = 0; a < h; ++a) mean[static_cast<std::size_t>(a)] += p[a] / m;
            }
            for (int a = 0; a < h; ++a)
                dev = std::max(dev, std::abs(mean[static_cast<std::size_t>(a)] -
                                             streamed.mean(c)[static_cast<std::size_t>(a)]));
            if (mode == CovMode::full) {
                Matrix cov(static_cast<std::size_t>(h), static_cast<std::size_t>(h));
                for (auto i : members) {
                    const double* p = features.row(i);
                    for (int a = 0; a < h; ++a)
                        for (int b = 0; b < h; ++b)
                            cov(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) +=
                                (p[a] - mean[static_cast<std::size_t>(a)]) *
                                (p[b] - mean[static_cast<std::size_t>(b)]) / m;
                }
                dev = std::max(dev, max_abs_diff(cov, streamed.cov(c)));
            } else {
                Vec var(static_cast<std::size_t>(h), 0.0);
                for (auto i : members) {
                    const double* p = features.row(i);
                    for (int a = 0; a < h; ++a)
                        var[static_cast<std::size_t>(a)] +=
                            (p[a] - mean[static_cast<std::size_t>(a)]) *
                            (p[a] - mean[static_cast<std::size_t>(a)]) / m;
                }
                dev = std::max(dev, max_abs_diff(var, streamed.var(c)));
            }
        }
        ++res.checks;
        res.worst_error = std::max(res.worst_error, dev);
        if (!(dev <= kStatsTol))
            add_failure(res, "trial " + std::to_string(trial) + ": merge residual " + fmtd(dev));
    }
    return res;
}

SuiteResult verify_taylor(const VerifyOptions& opt) {
    SuiteResult res;
    res.suite = "taylor";
    res.tolerance = kTaylorSlack;
    Rng root = Rng(opt.seed).split("taylor");
    const int h = 6, n = 6;
    const char* methods[] = {"la", "isda", "risda", "icda"};
    const std::vector<double> eps_list = {0.05, 0.025, 0.0125, 0.00625};

    for (int i = 0; i < opt.taylor_instances; ++i) {
        Rng rng = root.split(static_cast<std::uint64_t>(i));
        const int classes = 4 + (i % 3);
        const CovMode mode = i % 2 == 0 ? CovMode::full : CovMode::diagonal;
        Instance inst = make_instance(rng, classes, h, n, mode);
        Matrix logits = logits_of(inst.features, inst.head);

        PerturbationParams params;
        params.lambda = 0.5;
        params.beta = 0.1;

        for (const char* method : methods) {
            Matrix du = perturbation_delta_u(method, inst.features, inst.labels, inst.head,
                                             inst.stats, inst.confusion, inst.strengths,
                                             inst.priors, params);
            RegularizerReport reg = regularizer(method, logits, inst.features, inst.labels,
                                                inst.head, inst.stats, inst.confusion,
                                                inst.strengths, inst.priors, params);

            // The implemented penalty must be exactly the expansion's
            // first-order coefficient (minus the dropped per-sample constant).
            double fo_sum = 0.0;
            Vec q(static_cast<std::size_t>(classes));
            for (std::size_t s = 0; s < static_cast<std::size_t>(n); ++s) {
                softmax(logits.row(s), classes, q.data());
                for (int c = 0; c < classes; ++c)
                    fo_sum += q[static_cast<std::size_t>(c)] * du(s, static_cast<std::size_t>(c));
                fo_sum -= du(s, static_cast<std::size_t>(inst.labels[s]));
            }
            double expected = fo_sum;
            if (std::string(method) == "icda")
                for (std::size_t s = 0; s < static_cast<std::size_t>(n); ++s)
                    expected -= params.beta * inst.strengths.alpha_scalar[s];
            ++res.checks;
            const double tie = std::abs(reg.total - expected);
            if (!(tie <= kPenaltyTieTol))
                add_failure(res, std::string(method) + " instance " + std::to_string(i) +
                                     ": penalty/expansion tie off by " + fmtd(tie));

            // Remainder decay on the first sample's row.
            Vec u0(static_cast<std::size_t>(classes));
            Vec du0(static_cast<std::size_t>(classes));
            double linf = 0.0;
            for (int c = 0; c < classes; ++c) {
                u0[static_cast<std::size_t>(c)] = logits(0, static_cast<std::size_t>(c));
                du0[static_cast<std::size_t>(c)] = du(0, static_cast<std::size_t>(c));
                linf = std::max(linf, std::abs(du0[static_cast<std::size_t>(c)]));
            }
            if (linf > 2.0)
                for (double& x : du0) x *= 2.0 / linf;
            const int y0 = inst.labels[0];
            TaylorTable table = taylor_check(
                [&](const Vec& u) { return log_sum_exp(u) - u[static_cast<std::size_t>(y0)]; },
                y0, u0, du0, eps_list);
            ++res.checks;
            if (table.rows.front().err < 1e-12) continue;  // flat direction, nothing to decay
            double worst = 0.0;
            for (double ratio : table.ratios)
                worst = std::max(worst, std::abs(ratio - kTaylorCenter));
            res.worst_error = std::max(res.worst_error, worst);
            if (!(worst <= kTaylorSlack))
                add_failure(res, std::string(method) + " instance " + std::to_string(i) +
                                     ": ratio off center by " + fmtd(worst));
        }
    }
    return res;
}

std::vector<SuiteResult> run_verify(const std::string& tag, const VerifyOptions& opt) {
    std::vector<SuiteResult> out;
    const bool all = tag == "all";
    if (all || tag == "gradients") out.push_back(verify_gradients(opt));
    if (all || tag == "bound") out.push_back(verify_bound(opt));
    if (all || tag == "reductions") out.push_back(verify_reductions(opt));
    if (all || tag == "stats") out.push_back(verify_stats(opt));
    if (all || tag == "taylor") out.push_back(verify_taylor(opt));
    if (out.empty())
        throw ConfigError("unknown verify suite '" + tag +
                          "' (expected gradients|bound|reductions|stats|taylor|all)");
    return out;
}

std::string verify_json(const std::vector<SuiteResult>& results) {
    nlohmann::json suites = nlohmann::json::array();
    for (const auto& r : results)
        suites.push_back({{"suite", r.suite},
                          {"checks", r.checks},
                          {"failures", r.failures},
                          {"worst_error", r.worst_error},
                          {"tolerance", r.tolerance},
                          {"notes", r.notes}});
    nlohmann::json j{
        {"schema", "icda-verify-v1"}, {"suites", suites}, {"passed", all_passed(results)}};
    return j.dump(2) + "\n";
}

bool all_passed(const std::vector<SuiteResult>& results) {
    for (const auto& r : results)
        if (r.failures > 0) return false;
    return !results.empty();
}

}  // namespace icda
