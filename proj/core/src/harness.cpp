#include "icda/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "icda/check.hpp"
#include "icda/diagnostics.hpp"
#include "icda/numerics.hpp"

namespace icda {

namespace {

using nlohmann::json;

Dataset subset_rows(const Dataset& d, const std::vector<std::size_t>& idx, const char* tag) {
    Dataset out;
    out.classes = d.classes;
    out.split_tag = tag;
    out.features = Matrix(idx.size(), d.dim());
    out.labels.resize(idx.size());
    if (!d.groups.empty()) out.groups.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const double* from = d.features.row(idx[r]);
        std::copy(from, from + d.dim(), out.features.row(r));
        out.labels[r] = d.labels[idx[r]];
        if (!d.groups.empty()) out.groups[r] = d.groups[idx[r]];
    }
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

json eval_to_json(const EvalRecord& e) {
    return json{{"iteration", e.iteration},
                {"train_loss", e.train_loss},
                {"test_loss", e.test_loss},
                {"accuracy", e.accuracy},
                {"per_class_accuracy", e.per_class},
                {"tail_accuracy", e.tail_accuracy},
                {"worst_group_accuracy", e.worst_group}};
}

json summary_to_json(const SeedSummary& s, bool with_seed) {
    json j{{"accuracy", s.accuracy},
           {"tail_accuracy", s.tail_accuracy},
           {"worst_group_accuracy", s.worst_group},
           {"test_loss", s.test_loss}};
    if (with_seed) j["seed"] = s.seed;
    return j;
}

// Bounded fan-out: tasks launched in waves of the hardware thread count,
// results merged in index order so scheduling never shows in the output.
template <typename T, typename F>
std::vector<T> run_tasks(std::size_t count, F fn) {
    const std::size_t wave = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    std::vector<T> out;
    out.reserve(count);
    for (std::size_t start = 0; start < count; start += wave) {
        const std::size_t end = std::min(count, start + wave);
        std::vector<std::future<T>> futs;
        futs.reserve(end - start);
        for (std::size_t k = start; k < end; ++k)
            futs.push_back(std::async(std::launch::async, fn, k));
        for (auto& f : futs) out.push_back(f.get());
    }
    return out;
}

SeedSummary summarize(std::uint64_t seed, const TrainReport& rep) {
    SeedSummary s;
    s.seed = seed;
    s.accuracy = rep.final_eval.accuracy;
    s.tail_accuracy = rep.final_eval.tail_accuracy;
    s.worst_group = rep.final_eval.worst_group;
    s.test_loss = rep.final_eval.test_loss;
    return s;
}

}  // namespace

BuiltSplits build_splits(const ExperimentConfig& cfg, std::uint64_t seed) {
    const DatasetConfig& d = cfg.dataset;
    Rng root(seed);
    BuiltSplits out;

    if (d.kind == "gaussian") {
        Rng pool_rng = root.split("pool");
        Dataset pool = make_gaussian_mixture(d.classes, d.dim, d.separation,
                                             d.n_per_class + d.test_per_class, pool_rng);
        // Per class, the first n_per_class occurrences in pool order train and
        // the rest test, so both splits share one mixture with disjoint noise.
        std::vector<int> taken(static_cast<std::size_t>(d.classes), 0);
        std::vector<std::size_t> train_idx;
        std::vector<std::size_t> test_idx;
        for (std::size_t i = 0; i < pool.n(); ++i) {
            auto& k = taken[static_cast<std::size_t>(pool.labels[i])];
            (k < d.n_per_class ? train_idx : test_idx).push_back(i);
            ++k;
        }
        out.train = subset_rows(pool, train_idx, "train");
        out.test = subset_rows(pool, test_idx, "test");
    } else if (d.kind == "spurious") {
        SpuriousConfig sc;
        sc.d_signal = d.d_signal;
        sc.d_spur = d.d_spur;
        sc.train_group_ratio = d.train_group_ratio;
        sc.test_group_ratio = d.test_group_ratio;
        sc.label_flip = d.label_flip;
        sc.n_train = d.n_train;
        sc.n_test = d.n_test;
        sc.signal_scale = d.signal_scale;
        sc.spur_scale = d.spur_scale;
        Rng sp_rng = root.split("spurious");
        auto pair = make_spurious(sc, sp_rng);
        out.train = std::move(pair.first);
        out.test = std::move(pair.second);
    } else {
        throw ConfigError("dataset.kind must be gaussian or spurious; got '" + d.kind + "'");
    }

    // Metadata is carved out before imbalance and noise so it stays balanced
    // and clean, which is the premise of the outer objective.
    if (cfg.train.method == "meta_icda") {
        Rng ms_rng = root.split("meta_split");
        auto pair = split_meta(out.train, cfg.meta_per_class, ms_rng);
        out.train = std::move(pair.first);
        out.meta = std::move(pair.second);
    }

    if (d.imbalance_ratio > 1.0) {
        Rng imb_rng = root.split("imbalance");
        out.train = apply_imbalance(out.train, ImbalanceProfile{d.imbalance_ratio}, imb_rng);
    }

    if (d.noise_kind != "none") {
        NoiseSpec spec;
        spec.kind = d.noise_kind == "uniform" ? NoiseSpec::Kind::uniform
                                              : NoiseSpec::Kind::pair_flip;
        spec.rate = d.noise_rate;
        Rng nz_rng = root.split("noise");
        out.train.labels = inject_noise(out.train.labels, out.train.classes, spec, nz_rng);
    }
    return out;
}

TrainReport run_single(const ExperimentConfig& cfg, std::uint64_t seed) {
    validate_config(cfg);
    BuiltSplits splits = build_splits(cfg, seed);
    Rng root(seed);
    Rng trainer_rng = root.split("trainer");
    if (cfg.train.method == "meta_icda")
        return run_meta_icda(splits.train, splits.meta, splits.test, cfg.train, trainer_rng);
    return train_model(splits.train, splits.test, cfg.train, trainer_rng);
}

AggregateResult aggregate(const std::vector<SeedSummary>& rows) {
    ICDA_REQUIRE(!rows.empty(), "aggregate: no per-seed rows");
    AggregateResult agg;
    agg.per_seed = rows;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        agg.mean.accuracy += r.accuracy / n;
        agg.mean.tail_accuracy += r.tail_accuracy / n;
        agg.mean.worst_group += r.worst_group / n;
        agg.mean.test_loss += r.test_loss / n;
    }
    if (rows.size() > 1) {
        double va = 0.0, vt = 0.0, vw = 0.0, vl = 0.0;
        for (const auto& r : rows) {
            va += (r.accuracy - agg.mean.accuracy) * (r.accuracy - agg.mean.accuracy);
            vt += (r.tail_accuracy - agg.mean.tail_accuracy) *
                  (r.tail_accuracy - agg.mean.tail_accuracy);
            vw += (r.worst_group - agg.mean.worst_group) * (r.worst_group - agg.mean.worst_group);
            vl += (r.test_loss - agg.mean.test_loss) * (r.test_loss - agg.mean.test_loss);
        }
        const double denom = n - 1.0;
        agg.stddev.accuracy = std::sqrt(va / denom);
        agg.stddev.tail_accuracy = std::sqrt(vt / denom);
        agg.stddev.worst_group = std::sqrt(vw / denom);
        agg.stddev.test_loss = std::sqrt(vl / denom);
    }
    return agg;
}

std::string metrics_json(const ExperimentConfig& cfg, std::uint64_t seed, const TrainReport& rep) {
    json evals = json::array();
    for (const auto& e : rep.evals) evals.push_back(eval_to_json(e));
    json j{{"schema", "icda-metrics-v1"},
           {"method", rep.method},
           {"seed", seed},
           {"config_text", config_to_text(cfg)},
           {"priors", rep.priors},
           {"tail_classes", rep.tail_classes},
           {"final", eval_to_json(rep.final_eval)},
           {"evals", evals}};
    return j.dump(2) + "\n";
}

std::string aggregate_json(const ExperimentConfig& cfg, const AggregateResult& agg) {
    json per_seed = json::array();
    for (const auto& r : agg.per_seed) per_seed.push_back(summary_to_json(r, true));
    json j{{"schema", "icda-aggregate-v1"},
           {"method", cfg.train.method},
           {"seeds", cfg.seeds},
           {"config_text", config_to_text(cfg)},
           {"per_seed", per_seed},
           {"mean", summary_to_json(agg.mean, false)},
           {"std", summary_to_json(agg.stddev, false)}};
    return j.dump(2) + "\n";
}

std::string trace_csv(const TrainReport& rep) {
    std::ostringstream os;
    os << "iteration,lr,lambda,loss,mean_alpha,meta_loss\n";
    for (const auto& r : rep.trace)
        os << r.iteration << "," << num(r.lr) << "," << num(r.lambda) << "," << num(r.loss) << ","
           << num(r.mean_alpha) << "," << num(r.meta_loss) << "\n";
    return os.str();
}

std::string diagnostics_json(const ExperimentConfig& cfg, const TrainReport& rep,
                             const BuiltSplits& splits) {
    const std::size_t probe_n = std::min<std::size_t>(512, splits.train.n());
    std::vector<std::size_t> idx(probe_n);
    for (std::size_t i = 0; i < probe_n; ++i) idx[i] = i;
    Dataset probe = subset_rows(splits.train, idx, "probe");

    ForwardCache cache = forward(rep.backbone, rep.head, probe.features);
    const bool icda_like = rep.method == "icda" || rep.method == "meta_icda";

    StrengthMatrix strengths;
    double mean_alpha = 0.0;
    if (icda_like) {
        fill_alpha_matrix(strengths, cache.features, rep.head, probe.labels);
        // The bilevel run's net is a training-time object; the bundle probes
        // the loss surface with the direct rule it is anchored to.
        strengths.alpha_scalar = cfg.train.alpha_mode == "fixed"
                                     ? Vec(probe.n(), cfg.train.fixed_alpha)
                                     : alpha_scalar_direct(cache.features, rep.head, probe.labels);
        for (double a : strengths.alpha_scalar) mean_alpha += a;
        mean_alpha /= static_cast<double>(probe.n());
    }

    PerturbationParams params;
    params.lambda = cfg.train.icda.lambda0;
    params.beta = cfg.train.icda.beta;
    params.alpha_r = cfg.train.risda_alpha;
    params.beta_r = cfg.train.risda_beta;

    RegularizerReport reg =
        regularizer(rep.method == "meta_icda" ? "icda" : rep.method, cache.logits, cache.features,
                    probe.labels, rep.head, rep.stats, rep.confusion, strengths, rep.priors,
                    params);

    Matrix delta_u = perturbation_delta_u(rep.method == "meta_icda" ? "icda" : rep.method,
                                          cache.features, probe.labels, rep.head, rep.stats,
                                          rep.confusion, strengths, rep.priors, params);
    const int classes = probe.classes;
    Vec u0(static_cast<std::size_t>(classes));
    Vec du0(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        u0[static_cast<std::size_t>(c)] = cache.logits(0, static_cast<std::size_t>(c));
        du0[static_cast<std::size_t>(c)] = delta_u(0, static_cast<std::size_t>(c));
    }
    const int y0 = probe.labels[0];
    TaylorTable taylor = taylor_check(
        [&](const Vec& u) { return log_sum_exp(u) - u[static_cast<std::size_t>(y0)]; }, y0, u0,
        du0, {0.1, 0.05, 0.025, 0.0125});

    // Pairwise geometry at the final state: projected variance of class y
    // along each (c,y) boundary, and each class mean's distance to it.
    json mv_rows = json::array();
    json bd_raw = json::array();
    json bd_norm = json::array();
    for (int y = 0; y < classes; ++y) {
        json mv = json::array();
        json br = json::array();
        json bn = json::array();
        for (int c = 0; c < classes; ++c) {
            if (c == y) {
                mv.push_back(0.0);
                br.push_back(0.0);
                bn.push_back(0.0);
                continue;
            }
            double v = rep.stats.mode() == CovMode::full
                           ? mapped_variance(rep.head, c, y, rep.stats.cov(y))
                           : mapped_variance(rep.head, c, y, rep.stats.var(y));
            mv.push_back(v);
            BoundaryDistance bd = boundary_distance(rep.head, y, c, rep.stats.mean(y));
            br.push_back(bd.raw);
            bn.push_back(bd.normalized);
        }
        mv_rows.push_back(mv);
        bd_raw.push_back(br);
        bd_norm.push_back(bn);
    }

    double clamped_fraction = 0.0;
    if (icda_like) {
        IcdaEval ev = icda_eval(cache.features, probe.labels, rep.head, rep.stats, strengths,
                                cfg.train.icda.lambda0, cfg.train.icda.beta, rep.priors, false);
        std::size_t clamped = 0;
        for (auto f : ev.clamped) clamped += f;
        clamped_fraction = static_cast<double>(clamped) /
                           static_cast<double>(probe.n() * static_cast<std::size_t>(classes));
    }

    ForwardCache test_cache = forward(rep.backbone, rep.head, splits.test.features);
    MarginHistogram margins = margin_distribution(test_cache.logits, splits.test.labels);

    json jt{{"eps", json::array()}, {"err", json::array()}, {"ratios", taylor.ratios}};
    for (const auto& row : taylor.rows) {
        jt["eps"].push_back(row.eps);
        jt["err"].push_back(row.err);
    }

    json j{{"schema", "icda-diagnostics-v1"},
           {"method", rep.method},
           {"probe_size", probe_n},
           {"regularizer",
            {{"method", reg.method},
             {"total", reg.total},
             {"margin_term", reg.margin_term},
             {"mapped_variance_term", reg.mapped_variance_term},
             {"boundary_term", reg.boundary_term},
             {"delta_term", reg.delta_term}}},
           {"taylor", jt},
           {"mapped_variance", mv_rows},
           {"boundary_raw", bd_raw},
           {"boundary_normalized", bd_norm},
           {"margin",
            {{"bin_left", margins.bin_left},
             {"count", margins.count},
             {"correct", margins.correct},
             {"total", margins.total},
             {"small_margin_fraction", margins.small_margin_fraction}}},
           {"clamped_fraction", clamped_fraction},
           {"mean_alpha", mean_alpha},
           {"lambda_final", icda_like || rep.method == "isda" ? cfg.train.icda.lambda0 : 0.0}};
    return j.dump(2) + "\n";
}

AggregateResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    struct SeedArtifacts {
        std::string metrics;
        std::string trace;
        std::string diagnostics;
        SeedSummary summary;
    };
    auto artifacts = run_tasks<SeedArtifacts>(cfg.seeds.size(), [&](std::size_t k) {
        const std::uint64_t seed = cfg.seeds[k];
        BuiltSplits splits = build_splits(cfg, seed);
        Rng root(seed);
        Rng trainer_rng = root.split("trainer");
        TrainReport rep =
            cfg.train.method == "meta_icda"
                ? run_meta_icda(splits.train, splits.meta, splits.test, cfg.train, trainer_rng)
                : train_model(splits.train, splits.test, cfg.train, trainer_rng);
        SeedArtifacts a;
        a.metrics = metrics_json(cfg, seed, rep);
        a.trace = trace_csv(rep);
        a.diagnostics = diagnostics_json(cfg, rep, splits);
        a.summary = summarize(seed, rep);
        return a;
    });

    std::vector<SeedSummary> rows;
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
        const std::string dir = cfg.out_dir + "/seed_" + std::to_string(cfg.seeds[k]);
        fs::create_directories(dir);
        write_file(dir + "/metrics.json", artifacts[k].metrics);
        write_file(dir + "/trace.csv", artifacts[k].trace);
        write_file(dir + "/diagnostics.json", artifacts[k].diagnostics);
        rows.push_back(artifacts[k].summary);
    }

    AggregateResult agg = aggregate(rows);
    write_file(cfg.out_dir + "/metrics.json", aggregate_json(cfg, agg));
    if (cfg.seeds.size() == 1) {
        write_file(cfg.out_dir + "/trace.csv", artifacts[0].trace);
        write_file(cfg.out_dir + "/diagnostics.json", artifacts[0].diagnostics);
    }
    return agg;
}

SweepAxis parse_sweep_axis(const std::string& spec) {
    std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
        throw ConfigError("grid axis must be section.key=v1,v2,...; got '" + spec + "'");
    SweepAxis axis;
    axis.key = spec.substr(0, eq);
    std::string rest = spec.substr(eq + 1);
    std::istringstream is(rest);
    std::string part;
    while (std::getline(is, part, ','))
        if (!part.empty()) axis.values.push_back(part);
    if (axis.values.empty())
        throw ConfigError("grid axis '" + axis.key + "' lists no values");
    return axis;
}

std::string run_sweep(const ExperimentConfig& base, const std::vector<SweepAxis>& axes,
                      const std::string& out_dir) {
    ICDA_REQUIRE(!axes.empty(), "sweep needs at least one grid axis");
    std::size_t cells = 1;
    for (const auto& a : axes) cells *= a.values.size();

    // Cell k's value index along each axis, last axis fastest.
    auto cell_config = [&](std::size_t k, std::vector<std::string>& values) {
        ExperimentConfig cfg = base;
        std::size_t rem = k;
        values.resize(axes.size());
        for (std::size_t a = axes.size(); a-- > 0;) {
            const std::size_t v = rem % axes[a].values.size();
            rem /= axes[a].values.size();
            values[a] = axes[a].values[v];
            apply_override(cfg, axes[a].key + "=" + values[a]);
        }
        validate_config(cfg);
        return cfg;
    };

    struct CellRow {
        std::vector<std::string> values;
        AggregateResult agg;
    };
    auto rows = run_tasks<CellRow>(cells, [&](std::size_t k) {
        CellRow row;
        ExperimentConfig cfg = cell_config(k, row.values);
        std::vector<SeedSummary> summaries;
        for (std::uint64_t seed : cfg.seeds) summaries.push_back(summarize(seed, run_single(cfg, seed)));
        row.agg = aggregate(summaries);
        return row;
    });

    std::ostringstream os;
    os << "cell";
    for (const auto& a : axes) os << "," << a.key;
    os << ",accuracy_mean,accuracy_std,tail_accuracy_mean,tail_accuracy_std,"
          "worst_group_mean,worst_group_std,test_loss_mean,test_loss_std\n";
    for (std::size_t k = 0; k < cells; ++k) {
        os << k;
        for (const auto& v : rows[k].values) os << "," << v;
        const auto& m = rows[k].agg.mean;
        const auto& s = rows[k].agg.stddev;
        os << "," << num(m.accuracy) << "," << num(s.accuracy) << "," << num(m.tail_accuracy)
           << "," << num(s.tail_accuracy) << "," << num(m.worst_group) << ","
           << num(s.worst_group) << "," << num(m.test_loss) << "," << num(s.test_loss) << "\n";
    }

    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/sweep.csv", os.str());
    return os.str();
}

}  // namespace icda
