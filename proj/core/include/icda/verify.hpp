#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace icda {

// One property suite's outcome. worst_error is the suite's own scale: max
// normalized gradient deviation, max (mc - bound)/se, max identity residual,
// max merge residual, or max |ratio - 0.25|.
struct SuiteResult {
    std::string suite;
    int checks = 0;
    int failures = 0;
    double worst_error = 0.0;
    double tolerance = 0.0;
    std::vector<std::string> notes;  // first few failure descriptions
};

// Instance counts sized to the pinned acceptance thresholds; callers may
// shrink them for quick smoke runs.
struct VerifyOptions {
    std::uint64_t seed = 12345;
    int grad_instances = 100;
    int bound_instances = 25;
    int bound_draws = 100000;
    int reduction_instances = 100;
    int stats_trials = 100;
    int taylor_instances = 20;
};

// Analytic loss gradients (head w, b, features) vs central finite
// differences for every method, both covariance modes.
SuiteResult verify_gradients(const VerifyOptions& opt);

// Monte-Carlo expected augmented loss vs the closed-form upper bound across
// a lambda grid; exact agreement at lambda = 0.
SuiteResult verify_bound(const VerifyOptions& opt);

// Exact coincidences: prior-shift and plain-CE reductions, the
// variance-only reduction, the penalty-level reduction, and a short
// bit-identical training trajectory.
SuiteResult verify_reductions(const VerifyOptions& opt);

// Streamed per-class moments vs pooled direct computation over random batch
// partitions, both covariance modes.
SuiteResult verify_stats(const VerifyOptions& opt);

// Second-order remainder decay of each method's logit perturbation, plus the
// tie between the expansion's first-order term and the implemented penalty.
SuiteResult verify_taylor(const VerifyOptions& opt);

// tag: gradients | bound | reductions | stats | taylor | all.
std::vector<SuiteResult> run_verify(const std::string& tag, const VerifyOptions& opt);

std::string verify_json(const std::vector<SuiteResult>& results);
bool all_passed(const std::vector<SuiteResult>& results);

}  // namespace icda
