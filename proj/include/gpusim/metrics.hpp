#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpusim/failure.hpp"
#include "gpusim/simulation.hpp"

namespace gpusim {

struct CdfPoint {
    double value = 0.0;
    double probability = 0.0;

    bool operator==(const CdfPoint&) const = default;
};

using Cdf = std::vector<CdfPoint>;

/// Empirical CDF with one point per distinct sample value; the final point
/// carries probability 1.0. Empty input gives an empty CDF.
Cdf compute_cdf(std::vector<double> samples);

/// CDF over integer-percent utilization bins.
Cdf cdf_from_histogram(const UtilizationHistogram& hist);

struct ReportMeta {
    std::string schema_version = "1";
    std::string scenario = "baseline";
    uint64_t seed = 0;
    std::string config_hash;
};

struct StatusSection {
    int64_t submitted = 0;
    int64_t passed = 0;
    int64_t killed = 0;
    int64_t unsuccessful = 0;
    double gpu_time_total = 0.0;
    double gpu_time_share_passed = 0.0;      // percent
    double gpu_time_share_killed = 0.0;
    double gpu_time_share_unsuccessful = 0.0;
    double pool_gpu_time = 0.0;
};

struct DelaySection {
    std::map<std::string, std::map<std::string, Cdf>> queueing_delay_cdf; // vc -> bucket -> cdf
    std::map<std::string, Cdf> queueing_delay_by_bucket;
    std::map<std::string, int64_t> fair_share_occurrences;      // bucket -> interval count
    std::map<std::string, int64_t> fragmentation_occurrences;
    double fair_share_minutes = 0.0;
    double fragmentation_minutes = 0.0;
    double ooo_fraction = 0.0;             // out-of-order share of placements
    double ooo_harmless_fraction = -1.0;   // -1 when the analysis did not run
    std::map<std::string, double> bypassed_fraction; // bucket -> share of jobs passed over
    std::map<int, double> gt8_median_delay_by_stage; // placement stage -> median minutes
    std::map<int, int64_t> gt8_jobs_by_stage;
    double mean_queueing_delay = 0.0;
};

struct UtilizationSection {
    std::map<std::string, Cdf> cdf_by_bucket;
    std::map<std::string, Cdf> cdf_by_status;
    std::map<std::string, double> mean_by_bucket;
    std::map<std::string, int64_t> samples_by_bucket;
    std::map<int, double> mean_16gpu_by_spread;
    std::map<int, int64_t> samples_16gpu_by_spread;
};

struct PlacementSection {
    int64_t placements = 0;
    int64_t ooo_placements = 0;
    int64_t colocated_placements = 0;
    std::map<std::string, double> mean_servers_by_bucket;
    std::map<std::string, double> mean_slowdown_by_bucket;
};

struct ConvergenceSection {
    double delta = 0.0;
    Cdf passed_fraction_cdf;
    Cdf killed_fraction_cdf;
    double passed_gpu_time_share_past = 0.0;
    double killed_gpu_time_share_past = 0.0;
    double passed_within_45pct = 0.0; // share of passed jobs converged in <=45% of epochs
};

struct FailureReasonRow {
    int64_t trials = 0;
    int64_t jobs = 0;
    int64_t users = 0;
    double rtf_p50 = 0.0;
    double rtf_p90 = 0.0;
    double rtf_p95 = 0.0;
    double rtf_share = 0.0;        // percent of summed RTF
    int64_t demand_1 = 0;
    int64_t demand_2_4 = 0;
    int64_t demand_gt4 = 0;
    double rtf_demand_share = 0.0; // percent of summed RTF x demand
    double cluster_gpu_minutes_lost = 0.0;
};

struct FailureSection {
    std::map<std::string, FailureReasonRow> by_reason;
    double repetition_per_job = 0.0;
    double repetition_per_user = 0.0;
    int64_t cluster_failures = 0;
    int64_t pool_failures = 0;
};

struct MetricsReport {
    ReportMeta meta;
    StatusSection status;
    DelaySection delay;
    UtilizationSection utilization;
    PlacementSection placement;
    ConvergenceSection convergence;
    FailureSection failures;
    std::vector<ClusterSnapshot> snapshots;
};

struct ReportOptions {
    double convergence_delta = 0.001;
    /// Jobs submitted before this time are excluded from the per-stage delay
    /// medians (cold-start placements are not representative).
    Minutes fig4_warmup_min = 0.0;
};

/// Aggregates a finished run into the report.
MetricsReport build_report(const SimInputs& inputs, const RunResult& run, const ReportMeta& meta,
                           const ReportOptions& options);

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& doc);

/// report.json plus per-section CSVs and the run manifest.
void write_report_files(const MetricsReport& report, const std::string& out_dir);

/// Per-job outcome table (jobs.csv), one row per submitted job.
void write_job_outcomes(const RunResult& run, const std::string& out_dir);
MetricsReport read_report(const std::string& path);

struct DiffEntry {
    std::string path;
    double a = 0.0;
    double b = 0.0;
    double delta = 0.0; // b - a
};

struct DiffResult {
    bool paired = false; // same seed on both sides
    std::vector<DiffEntry> entries;
};

/// Per-metric deltas over every numeric leaf both reports share. Throws
/// SchemaMismatch when schema versions differ.
DiffResult diff_reports(const MetricsReport& a, const MetricsReport& b);

std::string format_diff(const DiffResult& diff, bool changed_only);

/// FNV-1a over a canonical JSON dump; stable across runs.
std::string config_hash_hex(const nlohmann::json& canonical);

} // namespace gpusim
