#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "icda/check.hpp"
#include "icda/harness.hpp"
#include "icda/model.hpp"

using icda::BuiltSplits;
using icda::ExperimentConfig;
using icda::TrainReport;
using nlohmann::json;

namespace {

ExperimentConfig tiny_cfg(const std::string& method) {
    ExperimentConfig cfg;
    cfg.dataset.classes = 3;
    cfg.dataset.dim = 5;
    cfg.dataset.separation = 3.0;
    cfg.dataset.n_per_class = 30;
    cfg.dataset.test_per_class = 10;
    cfg.train.method = method;
    cfg.train.widths = {8};
    cfg.train.iterations = 40;
    cfg.train.batch_size = 16;
    cfg.train.eval_every = 20;
    cfg.meta_per_class = 4;
    cfg.train.meta_batch_size = 8;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("split building is balanced, shaped and seed-deterministic") {
    ExperimentConfig cfg = tiny_cfg("ce");
    BuiltSplits a = icda::build_splits(cfg, 5);
    CHECK(a.train.n() == 90);
    CHECK(a.test.n() == 30);
    CHECK(a.meta.n() == 0);
    CHECK(a.train.dim() == 5);
    for (std::size_t c : a.train.class_counts()) CHECK(c == 30);
    for (std::size_t c : a.test.class_counts()) CHECK(c == 10);
    a.train.validate();
    a.test.validate();

    BuiltSplits b = icda::build_splits(cfg, 5);
    CHECK(a.train.features.data == b.train.features.data);
    CHECK(a.test.features.data == b.test.features.data);
    CHECK(a.train.labels == b.train.labels);

    BuiltSplits c = icda::build_splits(cfg, 6);
    CHECK(a.train.features.data != c.train.features.data);
}

TEST_CASE("the meta split is carved balanced before imbalance thins the tail") {
    ExperimentConfig cfg = tiny_cfg("meta_icda");
    cfg.dataset.imbalance_ratio = 100.0;
    BuiltSplits s = icda::build_splits(cfg, 7);

    std::vector<std::size_t> meta_counts = s.meta.class_counts();
    REQUIRE(meta_counts.size() == 3);
    for (std::size_t c : meta_counts) CHECK(c == 4);

    // 26 per class remain; the exponential profile then keeps 26, 3, 1
    std::vector<std::size_t> train_counts = s.train.class_counts();
    CHECK(train_counts == std::vector<std::size_t>{26, 3, 1});

    ExperimentConfig plain = tiny_cfg("ce");
    BuiltSplits p = icda::build_splits(plain, 7);
    CHECK(p.meta.n() == 0);
}

TEST_CASE("one seed trained twice emits byte-identical metrics") {
    ExperimentConfig cfg = tiny_cfg("icda");
    TrainReport a = icda::run_single(cfg, 3);
    TrainReport b = icda::run_single(cfg, 3);
    CHECK(icda::metrics_json(cfg, 3, a) == icda::metrics_json(cfg, 3, b));
    CHECK(icda::trace_csv(a) == icda::trace_csv(b));
    CHECK(icda::checkpoint_to_bytes(a.backbone, a.head) ==
          icda::checkpoint_to_bytes(b.backbone, b.head));
}

TEST_CASE("aggregation averages the final summaries and spreads them") {
    icda::SeedSummary r1;
    r1.seed = 1;
    r1.accuracy = 0.5;
    r1.tail_accuracy = 0.4;
    r1.worst_group = 0.3;
    r1.test_loss = 1.0;
    icda::SeedSummary r2 = r1;
    r2.seed = 2;
    r2.accuracy = 0.7;
    r2.test_loss = 2.0;

    icda::AggregateResult agg = icda::aggregate({r1, r2});
    CHECK(agg.per_seed.size() == 2);
    CHECK(agg.mean.accuracy == doctest::Approx(0.6));
    CHECK(agg.mean.test_loss == doctest::Approx(1.5));
    CHECK(agg.stddev.accuracy == doctest::Approx(std::sqrt(0.02)));
    CHECK(agg.stddev.tail_accuracy == doctest::Approx(0.0));

    icda::AggregateResult one = icda::aggregate({r1});
    CHECK(one.mean.accuracy == doctest::Approx(0.5));
    CHECK(one.stddev.accuracy == 0.0);

    CHECK_THROWS_AS((void)icda::aggregate({}), icda::ContractViolation);
}

TEST_CASE("the metrics document carries the schema, config and eval history") {
    ExperimentConfig cfg = tiny_cfg("icda");
    TrainReport rep = icda::run_single(cfg, 11);
    json j = json::parse(icda::metrics_json(cfg, 11, rep));

    CHECK(j["schema"] == "icda-metrics-v1");
    CHECK(j["method"] == "icda");
    CHECK(j["seed"] == 11);
    CHECK(j["priors"].size() == 3);
    CHECK(j["tail_classes"].size() == 3);
    CHECK(j["evals"].size() == rep.evals.size());
    CHECK(j["final"]["iteration"] == 40);
    CHECK(j["final"]["accuracy"] == rep.final_eval.accuracy);
    for (const char* key : {"iteration", "train_loss", "test_loss", "accuracy",
                            "per_class_accuracy", "tail_accuracy", "worst_group_accuracy"})
        CHECK(j["final"].contains(key));

    // the embedded config reparses to the run's exact configuration
    ExperimentConfig back = icda::parse_config_text(j["config_text"].get<std::string>());
    CHECK(icda::config_to_text(back) == icda::config_to_text(cfg));
}

TEST_CASE("the trace table round-trips every float column") {
    ExperimentConfig cfg = tiny_cfg("icda");
    TrainReport rep = icda::run_single(cfg, 13);
    std::string csv = icda::trace_csv(rep);

    std::istringstream is(csv);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "iteration,lr,lambda,loss,mean_alpha,meta_loss");

    std::size_t rows = 0;
    while (std::getline(is, line)) {
        std::istringstream fields(line);
        std::string f;
        std::vector<std::string> parts;
        while (std::getline(fields, f, ',')) parts.push_back(f);
        REQUIRE(parts.size() == 6);
        const icda::TraceRow& row = rep.trace[rows];
        CHECK(std::stoi(parts[0]) == row.iteration);
        CHECK(std::stod(parts[1]) == row.lr);
        CHECK(std::stod(parts[2]) == row.lambda);
        CHECK(std::stod(parts[3]) == row.loss);
        CHECK(std::stod(parts[4]) == row.mean_alpha);
        ++rows;
    }
    CHECK(rows == rep.trace.size());
    CHECK(rows == 40);
}

TEST_CASE("the diagnostics bundle reports the loss surface probes") {
    ExperimentConfig cfg = tiny_cfg("icda");
    BuiltSplits splits = icda::build_splits(cfg, 17);
    TrainReport rep = icda::run_single(cfg, 17);
    json j = json::parse(icda::diagnostics_json(cfg, rep, splits));

    CHECK(j["schema"] == "icda-diagnostics-v1");
    CHECK(j["method"] == "icda");
    CHECK(j["probe_size"] == 90);
    CHECK(j["regularizer"]["method"] == "icda");
    for (const char* key :
         {"total", "margin_term", "mapped_variance_term", "boundary_term", "delta_term"})
        CHECK(j["regularizer"][key].is_number());

    CHECK(j["taylor"]["eps"].size() == 4);
    CHECK(j["taylor"]["ratios"].size() == 3);

    auto mv = j["mapped_variance"];
    REQUIRE(mv.size() == 3);
    for (std::size_t y = 0; y < 3; ++y) {
        REQUIRE(mv[y].size() == 3);
        CHECK(mv[y][y] == 0.0);
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(mv[y][c].get<double>() >= -1e-10);  // projected variances
    }

    CHECK(j["margin"]["total"] == 30);
    double cf = j["clamped_fraction"].get<double>();
    CHECK(cf >= 0.0);
    CHECK(cf <= 1.0);
    double ma = j["mean_alpha"].get<double>();
    CHECK(ma >= 0.0);
    CHECK(ma <= 1.0);
    CHECK(j["lambda_final"] == cfg.train.icda.lambda0);
}

TEST_CASE("plain training produces an inert perturbation report") {
    ExperimentConfig cfg = tiny_cfg("ce");
    BuiltSplits splits = icda::build_splits(cfg, 19);
    TrainReport rep = icda::run_single(cfg, 19);
    json j = json::parse(icda::diagnostics_json(cfg, rep, splits));
    CHECK(j["regularizer"]["method"] == "ce");
    CHECK(j["regularizer"]["total"] == 0.0);
    CHECK(j["mean_alpha"] == 0.0);
    CHECK(j["clamped_fraction"] == 0.0);
    CHECK(j["lambda_final"] == 0.0);
}

TEST_CASE("an experiment writes per-seed artifacts and the aggregate") {
    namespace fs = std::filesystem;
    ExperimentConfig cfg = tiny_cfg("icda");
    cfg.seeds = {1, 2};
    cfg.out_dir = "harness_test_out";
    fs::remove_all(cfg.out_dir);

    icda::AggregateResult agg = icda::run_experiment(cfg);
    CHECK(agg.per_seed.size() == 2);

    for (std::uint64_t s : {1ull, 2ull}) {
        const std::string dir = cfg.out_dir + "/seed_" + std::to_string(s);
        CHECK(fs::exists(dir + "/metrics.json"));
        CHECK(fs::exists(dir + "/trace.csv"));
        CHECK(fs::exists(dir + "/diagnostics.json"));
    }
    CHECK(fs::exists(cfg.out_dir + "/metrics.json"));
    CHECK_FALSE(fs::exists(cfg.out_dir + "/trace.csv"));  // only single-seed runs copy up

    json top = json::parse(slurp(cfg.out_dir + "/metrics.json"));
    CHECK(top["schema"] == "icda-aggregate-v1");
    CHECK(top["per_seed"].size() == 2);
    double mean_acc = (top["per_seed"][0]["accuracy"].get<double>() +
                       top["per_seed"][1]["accuracy"].get<double>()) /
                      2.0;
    CHECK(top["mean"]["accuracy"].get<double>() == doctest::Approx(mean_acc));

    // repeating the experiment overwrites with byte-identical artifacts
    std::string before = slurp(cfg.out_dir + "/seed_1/metrics.json");
    icda::run_experiment(cfg);
    CHECK(slurp(cfg.out_dir + "/seed_1/metrics.json") == before);

    fs::remove_all(cfg.out_dir);
}

TEST_CASE("a single-seed experiment places its artifacts at the top level") {
    namespace fs = std::filesystem;
    ExperimentConfig cfg = tiny_cfg("ce");
    cfg.seeds = {7};
    cfg.out_dir = "harness_test_single";
    fs::remove_all(cfg.out_dir);

    icda::run_experiment(cfg);
    CHECK(fs::exists(cfg.out_dir + "/metrics.json"));
    CHECK(fs::exists(cfg.out_dir + "/trace.csv"));
    CHECK(fs::exists(cfg.out_dir + "/diagnostics.json"));
    CHECK(fs::exists(cfg.out_dir + "/seed_7/metrics.json"));
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("sweep axes parse and reject malformed grids") {
    icda::SweepAxis axis = icda::parse_sweep_axis("train.method=ce,la");
    CHECK(axis.key == "train.method");
    CHECK(axis.values == std::vector<std::string>{"ce", "la"});

    CHECK_THROWS_AS((void)icda::parse_sweep_axis("train.method"), icda::ConfigError);
    CHECK_THROWS_AS((void)icda::parse_sweep_axis("=ce"), icda::ConfigError);
    CHECK_THROWS_AS((void)icda::parse_sweep_axis("train.method="), icda::ConfigError);
}

TEST_CASE("a sweep crosses its axes into one ordered results table") {
    namespace fs = std::filesystem;
    ExperimentConfig base = tiny_cfg("ce");
    base.seeds = {0};
    base.train.iterations = 30;
    const std::string out = "harness_test_sweep";
    fs::remove_all(out);

    std::vector<icda::SweepAxis> axes = {icda::parse_sweep_axis("train.method=ce,la"),
                                         icda::parse_sweep_axis("optim.lr=0.01,0.02")};
    std::string csv = icda::run_sweep(base, axes, out);
    CHECK(slurp(out + "/sweep.csv") == csv);

    std::istringstream is(csv);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line ==
          "cell,train.method,optim.lr,accuracy_mean,accuracy_std,tail_accuracy_mean,"
          "tail_accuracy_std,worst_group_mean,worst_group_std,test_loss_mean,test_loss_std");
    std::vector<std::string> rows;
    while (std::getline(is, line)) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].rfind("0,ce,0.01,", 0) == 0);  // last axis fastest
    CHECK(rows[1].rfind("1,ce,0.02,", 0) == 0);
    CHECK(rows[2].rfind("2,la,0.01,", 0) == 0);
    CHECK(rows[3].rfind("3,la,0.02,", 0) == 0);

    CHECK_THROWS_AS((void)icda::run_sweep(base, {}, out), icda::ContractViolation);
    fs::remove_all(out);
}
