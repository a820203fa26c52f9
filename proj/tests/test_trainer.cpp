#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "icda/check.hpp"
#include "icda/dataset.hpp"
#include "icda/losses.hpp"
#include "icda/model.hpp"
#include "icda/numerics.hpp"
#include "icda/trainer.hpp"
#include "test_helpers.hpp"

using icda::Backbone;
using icda::BatchSampler;
using icda::Dataset;
using icda::DenseLayer;
using icda::LinearHead;
using icda::Matrix;
using icda::Rng;
using icda::TrainConfig;
using icda::TrainReport;
using icda::Vec;

namespace {

struct Toy {
    Dataset train;
    Dataset test;
};

Toy make_toy(std::uint64_t seed, int classes = 3, int dim = 5, double sep = 2.5,
             int per_class = 60, int test_per_class = 20) {
    Rng rng(seed);
    Dataset pool = icda::make_gaussian_mixture(classes, dim, sep, per_class, rng);
    Rng split_rng = rng.split("test-split");
    auto [rest, test] = icda::split_meta(pool, test_per_class, split_rng);
    test.split_tag = "test";
    return {std::move(rest), std::move(test)};
}

TrainConfig base_cfg(const std::string& method) {
    TrainConfig cfg;
    cfg.method = method;
    cfg.widths = {8};
    cfg.iterations = 150;
    cfg.batch_size = 32;
    cfg.eval_every = 50;
    return cfg;
}

Dataset hand_dataset(int classes) {
    Dataset d;
    d.features = Matrix(4, 2);
    d.features(0, 0) = 2.0;
    d.features(0, 1) = 1.0;
    d.features(1, 0) = 1.0;
    d.features(1, 1) = 2.0;
    d.features(2, 0) = 3.0;
    d.features(2, 1) = 0.5;
    d.features(3, 0) = 0.5;
    d.features(3, 1) = 3.0;
    d.labels = {0, 1, 1, 1};
    d.classes = classes;
    return d;
}

// identity backbone and head so logits equal the (positive) inputs
std::pair<Backbone, LinearHead> passthrough_model(int classes) {
    Backbone bb;
    DenseLayer layer;
    layer.w = Matrix(2, 2);
    layer.w(0, 0) = 1.0;
    layer.w(1, 1) = 1.0;
    layer.b = Vec(2, 0.0);
    bb.layers.push_back(layer);

    LinearHead head;
    head.w = Matrix(static_cast<std::size_t>(classes), 2);
    head.w(0, 0) = 1.0;
    head.w(1, 1) = 1.0;
    head.b = Vec(static_cast<std::size_t>(classes), 0.0);
    return {bb, head};
}

}  // namespace

TEST_CASE("the batch sampler slices a fresh permutation per epoch") {
    BatchSampler sampler(10, 4, Rng(601));
    const auto& b1 = sampler.next();
    std::vector<std::size_t> first(b1.begin(), b1.end());
    const auto& b2 = sampler.next();

    REQUIRE(first.size() == 4);
    REQUIRE(b2.size() == 4);
    std::set<std::size_t> seen(first.begin(), first.end());
    seen.insert(b2.begin(), b2.end());
    CHECK(seen.size() == 8);  // first two slices never overlap
    for (std::size_t v : seen) CHECK(v < 10);

    // 2 of the 10 remain: too few, so the third batch starts a new shuffle
    const auto& b3 = sampler.next();
    REQUIRE(b3.size() == 4);
    for (std::size_t v : b3) CHECK(v < 10);
}

TEST_CASE("a full-size batch is a permutation every time") {
    BatchSampler sampler(6, 6, Rng(602));
    for (int round = 0; round < 3; ++round) {
        std::set<std::size_t> seen;
        const auto& b = sampler.next();
        seen.insert(b.begin(), b.end());
        CHECK(seen.size() == 6);
    }
}

TEST_CASE("the batch sampler replays exactly under the same seed") {
    BatchSampler a(17, 5, Rng(603));
    BatchSampler b(17, 5, Rng(603));
    BatchSampler c(17, 5, Rng(604));
    bool all_equal_c = true;
    for (int t = 0; t < 6; ++t) {
        std::vector<std::size_t> ba = a.next();
        CHECK(ba == b.next());
        if (ba != c.next()) all_equal_c = false;
    }
    CHECK_FALSE(all_equal_c);
}

TEST_CASE("priors come from the label histogram") {
    Dataset d = hand_dataset(2);
    Vec pi = icda::dataset_priors(d);
    REQUIRE(pi.size() == 2);
    CHECK(pi[0] == doctest::Approx(0.25));
    CHECK(pi[1] == doctest::Approx(0.75));
}

TEST_CASE("tail classes are the smallest, ties broken toward higher index") {
    Dataset d;
    d.classes = 4;
    d.labels = {0, 0, 0, 0, 0, 1, 1, 2, 2, 3};
    d.features = Matrix(10, 1);

    std::vector<int> tail = icda::smallest_classes(d, 3);
    CHECK(tail == std::vector<int>{3, 2, 1});
    CHECK(icda::smallest_classes(d, 10) == std::vector<int>{3, 2, 1, 0});
}

TEST_CASE("split evaluation reports accuracy, per-class, tail and worst group") {
    Dataset d = hand_dataset(2);
    auto [bb, head] = passthrough_model(2);

    icda::EvalRecord e = icda::evaluate_split(bb, head, d, {1});
    CHECK(e.accuracy == doctest::Approx(0.75));
    REQUIRE(e.per_class.size() == 2);
    CHECK(e.per_class[0] == doctest::Approx(1.0));
    CHECK(e.per_class[1] == doctest::Approx(2.0 / 3.0));
    CHECK(e.tail_accuracy == doctest::Approx(2.0 / 3.0));
    CHECK(e.worst_group == doctest::Approx(2.0 / 3.0));  // no groups: min per class

    double want_loss = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        Vec z{d.features(i, 0), d.features(i, 1)};
        want_loss += icda::log_sum_exp(z) - z[static_cast<std::size_t>(d.labels[i])];
    }
    want_loss /= 4.0;
    CHECK(e.test_loss == doctest::Approx(want_loss).epsilon(1e-12));
}

TEST_CASE("worst group follows group ids when the split carries them") {
    Dataset d = hand_dataset(2);
    d.groups = {0, 0, 1, 1};
    auto [bb, head] = passthrough_model(2);
    icda::EvalRecord e = icda::evaluate_split(bb, head, d, {1});
    CHECK(e.worst_group == doctest::Approx(0.5));
}

TEST_CASE("classes with no samples are skipped, not counted as zero accuracy") {
    Dataset d = hand_dataset(3);
    auto [bb, head] = passthrough_model(3);
    icda::EvalRecord e = icda::evaluate_split(bb, head, d, {1});
    CHECK(e.accuracy == doctest::Approx(0.75));
    REQUIRE(e.per_class.size() == 3);
    CHECK(e.per_class[2] == 0.0);
    CHECK(e.worst_group == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("training replays bit-identically under the same seed") {
    Toy toy = make_toy(605);
    TrainConfig cfg = base_cfg("icda");
    cfg.alpha_mode = "fixed";
    cfg.iterations = 60;
    cfg.eval_every = 20;

    TrainReport a = icda::train_model(toy.train, toy.test, cfg, Rng(9));
    TrainReport b = icda::train_model(toy.train, toy.test, cfg, Rng(9));
    CHECK(icda::checkpoint_to_bytes(a.backbone, a.head) ==
          icda::checkpoint_to_bytes(b.backbone, b.head));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t t = 0; t < a.trace.size(); ++t)
        CHECK(a.trace[t].loss == b.trace[t].loss);
    CHECK(a.final_eval.accuracy == b.final_eval.accuracy);
}

TEST_CASE("plain training solves a well-separated balanced mixture") {
    Toy toy = make_toy(606, 3, 5, 4.0, 100, 40);
    TrainConfig cfg = base_cfg("ce");
    cfg.widths = {16};
    cfg.iterations = 300;
    cfg.eval_every = 100;
    TrainReport rep = icda::train_model(toy.train, toy.test, cfg, Rng(10));
    CHECK(rep.final_eval.accuracy > 0.95);
}

TEST_CASE("the trace records the schedule, the ramp and the strength column") {
    Toy toy = make_toy(607);
    TrainConfig cfg = base_cfg("icda");
    cfg.alpha_mode = "fixed";
    cfg.iterations = 60;
    cfg.eval_every = 25;
    cfg.sgd.schedule = {{30, 0.1}};

    TrainReport rep = icda::train_model(toy.train, toy.test, cfg, Rng(11));
    REQUIRE(rep.trace.size() == 60);
    for (int t = 0; t < 60; ++t) {
        const icda::TraceRow& row = rep.trace[static_cast<std::size_t>(t)];
        CHECK(row.iteration == t);
        CHECK(row.lr == icda::lr_at(cfg.sgd, t));
        CHECK(row.lambda == icda::lambda_at(t, cfg.iterations, cfg.icda.lambda0));
        CHECK(row.mean_alpha == 0.5);
        CHECK(row.meta_loss == 0.0);
        CHECK(std::isfinite(row.loss));
    }
    CHECK(rep.trace[29].lr == doctest::Approx(cfg.sgd.learning_rate));
    CHECK(rep.trace[30].lr == doctest::Approx(0.1 * cfg.sgd.learning_rate));

    std::vector<int> eval_iters;
    for (const auto& e : rep.evals) eval_iters.push_back(e.iteration);
    CHECK(eval_iters == std::vector<int>{25, 50, 60});
    CHECK(rep.final_eval.iteration == 60);
}

TEST_CASE("methods without augmentation leave the ramp and strength columns at zero") {
    Toy toy = make_toy(608);
    for (const char* method : {"ce", "la"}) {
        TrainConfig cfg = base_cfg(method);
        cfg.iterations = 30;
        TrainReport rep = icda::train_model(toy.train, toy.test, cfg, Rng(12));
        CHECK(rep.method == method);
        for (const auto& row : rep.trace) {
            CHECK(row.lambda == 0.0);
            CHECK(row.mean_alpha == 0.0);
        }
    }
}

TEST_CASE("every method trains the toy mixture to a sensible accuracy") {
    Toy toy = make_toy(609);
    for (const char* method : {"ce", "la", "isda", "risda", "icda"}) {
        TrainConfig cfg = base_cfg(method);
        TrainReport rep = icda::train_model(toy.train, toy.test, cfg, Rng(13));
        CHECK(rep.method == method);
        CHECK(rep.final_eval.accuracy > 0.6);
        for (const auto& row : rep.trace) CHECK(std::isfinite(row.loss));
        REQUIRE(rep.priors.size() == 3);
        CHECK(rep.tail_classes.size() == 3);  // tail_k=3 covers all classes here
    }
}

TEST_CASE("the bilevel loop trains and logs its outer objective") {
    Toy toy = make_toy(610);
    Rng carve(14);
    auto [rest, meta] = icda::split_meta(toy.train, 5, carve);

    TrainConfig cfg = base_cfg("meta_icda");
    cfg.meta_batch_size = 10;
    TrainReport rep = icda::run_meta_icda(rest, meta, toy.test, cfg, Rng(15));
    CHECK(rep.method == "meta_icda");
    CHECK(rep.final_eval.accuracy > 0.6);
    bool saw_meta_loss = false;
    for (const auto& row : rep.trace) {
        CHECK(std::isfinite(row.loss));
        CHECK(std::isfinite(row.meta_loss));
        if (row.meta_loss > 0.0) saw_meta_loss = true;
        CHECK(row.mean_alpha > 0.0);
        CHECK(row.mean_alpha < 1.0);
    }
    CHECK(saw_meta_loss);
}

TEST_CASE("a frozen outer loop reproduces fixed-strength training bitwise") {
    Toy toy = make_toy(611);
    Rng carve(16);
    auto [rest, meta] = icda::split_meta(toy.train, 5, carve);

    TrainConfig meta_cfg = base_cfg("meta_icda");
    meta_cfg.iterations = 50;
    meta_cfg.meta_batch_size = 10;
    meta_cfg.eta2 = 0.0;
    meta_cfg.net_init = "zeros";

    TrainConfig icda_cfg = meta_cfg;
    icda_cfg.method = "icda";
    icda_cfg.alpha_mode = "fixed";
    icda_cfg.fixed_alpha = 0.5;

    TrainReport a = icda::run_meta_icda(rest, meta, toy.test, meta_cfg, Rng(17));
    TrainReport b = icda::train_model(rest, toy.test, icda_cfg, Rng(17));

    CHECK(icda::checkpoint_to_bytes(a.backbone, a.head) ==
          icda::checkpoint_to_bytes(b.backbone, b.head));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t t = 0; t < a.trace.size(); ++t) {
        CHECK(a.trace[t].loss == b.trace[t].loss);
        CHECK(a.trace[t].mean_alpha == 0.5);
    }
    CHECK(a.final_eval.accuracy == b.final_eval.accuracy);
}

TEST_CASE("training rejects a non-positive evaluation cadence") {
    Toy toy = make_toy(612);
    TrainConfig cfg = base_cfg("ce");
    cfg.eval_every = 0;
    CHECK_THROWS_AS((void)icda::train_model(toy.train, toy.test, cfg, Rng(18)),
                    icda::ContractViolation);
}
