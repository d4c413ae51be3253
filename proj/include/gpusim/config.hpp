#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "gpusim/metrics.hpp"
#include "gpusim/simulation.hpp"

namespace gpusim {

struct ExperimentConfig {
    std::vector<RackSpec> topology;
    std::vector<VirtualClusterSpec> vcs;
    std::optional<WorkloadParams> workload; // synthetic generation
    std::optional<std::string> trace_path;  // or trace replay input
    SchedulerConfig sched;
    SlowdownTable calibration;
    FailureModelConfig failure_model;
    std::string failure_profile_path;
    std::string rules_path;
    std::optional<uint64_t> seed;
    double convergence_delta = 0.001;
    Minutes fig4_warmup_min = 1500.0;
    Minutes snapshot_interval_min = 10.0;
    uint64_t event_cap = 50'000'000;
    std::string scenario_name = "baseline";
    std::string config_hash;    // canonical hash of the loaded document
    std::string base_dir;       // directory of the config file (path resolution)
};

/// Loads and validates the experiment config; error messages name the
/// offending key. Relative paths resolve against the config file location.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& base_dir);

/// Calibration file: throughput table, utilization means, spread anchors.
SlowdownTable load_calibration(const std::string& path);
SlowdownTable parse_calibration(const nlohmann::json& doc);

/// Fully resolved simulation inputs: workload generated or trace parsed,
/// calibration and failure profile loaded. seed_override, when set, wins
/// over the config seed; one of the two must be present.
SimInputs resolve_inputs(const ExperimentConfig& config, std::optional<uint64_t> seed_override,
                         bool replay);

} // namespace gpusim
