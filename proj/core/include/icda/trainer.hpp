#pragma once

#include <string>
#include <vector>

#include "icda/dataset.hpp"
#include "icda/losses.hpp"
#include "icda/meta.hpp"
#include "icda/model.hpp"
#include "icda/stats.hpp"
#include "icda/strength.hpp"

namespace icda {

// Epoch-style minibatch cursor: a full shuffle up front, contiguous slices of
// fixed size, reshuffle when fewer than a full batch remains. Constant batch
// size keeps every method's floating-point reduction order identical.
class BatchSampler {
  public:
    BatchSampler(std::size_t n, std::size_t batch_size, Rng rng);
    const std::vector<std::size_t>& next();

  private:
    std::vector<std::size_t> order_;
    std::vector<std::size_t> batch_;
    std::size_t pos_ = 0;
    Rng rng_;
};

struct TrainConfig {
    std::string method = "ce";  // ce | la | isda | risda | icda | meta_icda
    std::vector<int> widths = {32, 16};
    SgdConfig sgd;
    int iterations = 2000;
    int batch_size = 64;
    int eval_every = 200;

    IcdaConfig icda;
    std::string alpha_mode = "direct";  // direct | noisy | fixed
    double fixed_alpha = 0.5;

    double risda_alpha = 0.5;
    double risda_beta = 0.5;
    double confusion_decay = 0.1;

    double eta2 = 1e-3;          // meta step size; 0 freezes net and stats
    int meta_batch_size = 32;
    std::string net_init = "random";  // random | zeros
    int tail_k = 3;
};

struct TraceRow {
    int iteration = 0;
    double lr = 0.0;
    double lambda = 0.0;
    double loss = 0.0;
    double mean_alpha = 0.0;
    double meta_loss = 0.0;
};

struct EvalRecord {
    int iteration = 0;
    double train_loss = 0.0;  // batch loss at that iteration
    double test_loss = 0.0;
    double accuracy = 0.0;
    Vec per_class;
    double tail_accuracy = 0.0;
    double worst_group = 0.0;
};

struct TrainReport {
    std::string method;
    std::vector<TraceRow> trace;
    std::vector<EvalRecord> evals;
    EvalRecord final_eval;
    Backbone backbone;
    LinearHead head;
    ClassStats stats;
    ConfusionRates confusion;
    Vec priors;
    std::vector<int> tail_classes;
};

// Class priors from the label histogram of the training split; fixed for the
// whole run so the prior-shift term is defined from the first iteration.
Vec dataset_priors(const Dataset& d);

// The tail_k classes with the fewest training samples (ties broken toward the
// higher class index, matching the exponential profile's ordering).
std::vector<int> smallest_classes(const Dataset& d, int k);

// Full-split evaluation: plain CE loss, top-1 accuracy, per-class accuracy,
// mean accuracy over tail_classes, and worst-group accuracy (min over group
// ids when the split carries groups, min per-class accuracy otherwise).
EvalRecord evaluate_split(const Backbone& bb, const LinearHead& head, const Dataset& d,
                          const std::vector<int>& tail_classes);

// Deterministic single-threaded training for ce/la/isda/risda/icda.
TrainReport train_model(const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                        Rng rng);

// The bilevel loop: per iteration, batch and meta batch, running-stats update,
// virtual head step, strength-net update, stats meta update (the updated
// values replace the running statistics), then the real step with strengths
// recomputed from the updated net.
TrainReport run_meta_icda(const Dataset& train, const Dataset& meta_set, const Dataset& test,
                          const TrainConfig& cfg, Rng rng);

}  // namespace icda
