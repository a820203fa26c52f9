#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icda/config.hpp"
#include "icda/dataset.hpp"
#include "icda/trainer.hpp"

namespace icda {

// The splits one seed trains on. meta stays empty unless the method needs it.
struct BuiltSplits {
    Dataset train;
    Dataset test;
    Dataset meta;
};

// Deterministic generation: one root Rng per seed, one split() stream per
// consumer (pool/imbalance/noise/spurious/meta_split), so changing any later
// stage never disturbs an earlier one.
BuiltSplits build_splits(const ExperimentConfig& cfg, std::uint64_t seed);

// Train one seed end to end (no file output).
TrainReport run_single(const ExperimentConfig& cfg, std::uint64_t seed);

struct SeedSummary {
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double tail_accuracy = 0.0;
    double worst_group = 0.0;
    double test_loss = 0.0;
};

struct AggregateResult {
    std::vector<SeedSummary> per_seed;
    SeedSummary mean;  // seed field unused
    SeedSummary stddev;
};

AggregateResult aggregate(const std::vector<SeedSummary>& rows);

// Serialized artifacts. JSON output is key-sorted and round-trip formatted,
// so byte-identical inputs give byte-identical files.
std::string metrics_json(const ExperimentConfig& cfg, std::uint64_t seed, const TrainReport& rep);
std::string aggregate_json(const ExperimentConfig& cfg, const AggregateResult& agg);
std::string trace_csv(const TrainReport& rep);
std::string diagnostics_json(const ExperimentConfig& cfg, const TrainReport& rep,
                             const BuiltSplits& splits);

// Full experiment: every seed trained (independent tasks, merged in seed
// order), per-seed artifacts written under <out>/seed_<N>/, the aggregate at
// <out>/metrics.json. A single-seed run also places its own metrics.json,
// trace.csv, and diagnostics.json at <out>/ directly.
AggregateResult run_experiment(const ExperimentConfig& cfg);

// One axis of a sweep grid: "section.key=v1,v2,...".
struct SweepAxis {
    std::string key;
    std::vector<std::string> values;
};
SweepAxis parse_sweep_axis(const std::string& spec);

// Cross product of the axes over the base config; each cell runs all seeds
// and contributes one CSV row of aggregated final metrics. Cells execute as
// independent tasks and are merged in grid order.
std::string run_sweep(const ExperimentConfig& base, const std::vector<SweepAxis>& axes,
                      const std::string& out_dir);

}  // namespace icda
