#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icda/trainer.hpp"

namespace icda {

// Everything the generators need to build one experiment's splits.
struct DatasetConfig {
    std::string kind = "gaussian";  // gaussian | spurious
    int classes = 10;
    int dim = 20;
    double separation = 3.0;
    int n_per_class = 1000;
    int test_per_class = 500;
    double imbalance_ratio = 1.0;    // 1 keeps the train split balanced
    std::string noise_kind = "none"; // none | uniform | pair_flip
    double noise_rate = 0.0;

    // spurious-correlation generator knobs
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

struct ExperimentConfig {
    DatasetConfig dataset;
    TrainConfig train;
    std::vector<std::uint64_t> seeds = {0};
    int meta_per_class = 10;  // samples per class moved into the meta split
    std::string out_dir = "out";
};

// Sectioned key=value text: [section] headers, one key = value per line,
// full-line # comments. Unknown sections or keys are configuration errors.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// "section.key=value", same keys the file format accepts.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Canonical serialization; parse(config_to_text(c)) == c. Embedded in every
// metrics report so a run's full configuration travels with its numbers.
std::string config_to_text(const ExperimentConfig& cfg);

// Structural checks beyond per-key parsing (method tag known, modes valid,
// sizes positive, meta split feasible).
void validate_config(const ExperimentConfig& cfg);

}  // namespace icda
