#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpusim/engine.hpp"

namespace gpusim {

enum class JobStatus { Pending, Passed, Killed, Unsuccessful };

const char* job_status_name(JobStatus s);
std::optional<JobStatus> job_status_from(const std::string& s);

struct Job {
    std::string job_id;
    std::string vc_id;
    std::string user_id;                  // optional; enables per-user failure stats
    Minutes submit_time = 0.0;
    int gpu_demand = 1;
    double work = 0.0;                    // GPU-compute minutes at ideal throughput
    std::optional<JobStatus> status_target; // set for replay, empty for simulation to decide
    std::optional<Minutes> kill_time;
    std::vector<double> loss_curve;
    int max_retries = 5;
};

enum class GpuBucket { B1, B2_4, B5_8, B_GT8 };

const char* gpu_bucket_name(GpuBucket b);
constexpr int kGpuBucketCount = 4;

/// Job size buckets: 1 / 2-4 / 5-8 / >8 GPUs.
GpuBucket bucket_of(int gpu_demand);

struct TraceIssue {
    int line = 0;
    bool fatal = false; // fatal: record dropped (schema violation)
    std::string message;
};

struct TraceParseResult {
    std::vector<Job> jobs;     // sorted by submit_time (stable)
    std::vector<TraceIssue> issues;
};

/**
 * Parses JSONL job records. Required keys: job_id, vc, submit_time,
 * gpu_demand, work. Optional: user, status, kill_time, loss_curve,
 * max_retries. Unknown keys are ignored. Records out of submit order are
 * accepted and re-sorted, with a warning issue.
 */
TraceParseResult parse_trace(std::istream& stream);

/// Strict wrapper: throws SchemaError listing every offending line.
std::vector<Job> parse_trace_strict(std::istream& stream);

/// Writes jobs in the same JSONL schema; parse_trace(serialize(x)) == x.
void serialize_trace(const std::vector<Job>& jobs, std::ostream& out);

/// Tail of the run-time distribution: Pareto above the log-normal body.
struct RuntimeTail {
    double probability = 0.0;
    double pareto_xm = 0.0;
    double pareto_alpha = 1.0;
};

struct BucketParams {
    double share = 0.0;                    // probability of this bucket
    std::map<int, double> demand_weights;  // demand -> weight within bucket
    double runtime_median = 0.0;           // minutes, log-normal body median
    std::map<std::string, double> vc_weights; // per-bucket VC mix; empty = global
};

struct LossCurveParams {
    bool enabled = true;
    double amplitude = 9.0;          // initial loss = asymptote * (1 + amplitude)
    double plateau_early_share = 0.78;
    double plateau_early_lo = 0.05;
    double plateau_early_hi = 0.38;
    double plateau_late_lo = 0.50;
    double plateau_late_hi = 0.95;
    double noise_sigma = 0.0002;     // multiplicative
    int epochs_min = 20;
    int epochs_max = 120;
};

struct WorkloadParams {
    int job_count = 0;
    std::map<std::string, double> vc_arrival_weights; // vc -> share of arrivals
    std::vector<BucketParams> buckets;                // indexed by GpuBucket
    double runtime_sigma = 1.1;                       // log-normal body sigma
    RuntimeTail tail;
    double max_duration_min = 43200.0;                // hard cap on ideal wall minutes
    double killed_fraction = 0.0;     // jobs assigned a user kill time
    double arrival_load = 0.85;       // offered GPU load used to space arrivals
    int total_gpus = 0;               // capacity the load refers to
    int user_count = 32;
    int max_retries = 5;
    LossCurveParams loss_curve;
};

/// Deterministic synthetic workload: same params + seed give the same jobs.
/// Per-job draws use substreams keyed by job index, so downstream removal of
/// one job never shifts another's attributes.
std::vector<Job> generate_workload(const WorkloadParams& params, uint64_t seed);

} // namespace gpusim
