#pragma once

#include <optional>
#include <string>

#include "gpusim/config.hpp"
#include "gpusim/metrics.hpp"

namespace gpusim {

struct ExperimentResult {
    MetricsReport report;
    RunResult run;
    SimInputs inputs;
};

/**
 * Runs one experiment end to end: resolves inputs, simulates, aggregates,
 * and (when requested) writes report.json, the CSV views, and the run
 * manifest into out_dir. With ooo_harmless_analysis enabled the recorded
 * out-of-order decisions are re-judged against counterfactual replays
 * without the placed job.
 */
ExperimentResult run_experiment(const ExperimentConfig& config, std::optional<uint64_t> seed_override,
                                const std::string& out_dir, bool replay);

/// Harmless fraction of the recorded decisions: a decision is harmless when
/// removing the placed job would not have let any then-waiting job start
/// earlier. Returns -1 when there is nothing to analyze.
double analyze_ooo_harmless(const SimInputs& inputs, const RunResult& run);

} // namespace gpusim
