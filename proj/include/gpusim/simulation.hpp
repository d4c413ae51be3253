#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpusim/cluster.hpp"
#include "gpusim/engine.hpp"
#include "gpusim/exec_model.hpp"
#include "gpusim/failure.hpp"
#include "gpusim/scheduler.hpp"
#include "gpusim/workload.hpp"

namespace gpusim {

struct SimInputs {
    ClusterTopology topo;
    std::vector<VirtualClusterSpec> vcs;
    std::vector<Job> jobs;
    SchedulerConfig sched;
    SlowdownTable calibration;
    FailureModelConfig failure_config;
    FailureProfile failure_profile;
    uint64_t seed = 0;
    uint64_t event_cap = 50'000'000;
    Minutes snapshot_interval_min = 10.0;
    bool replay = false; // honor per-job status targets from the trace
};

/// Everything the reporters need to know about one finished job.
struct JobOutcome {
    std::string job_id;
    std::string vc_id;
    std::string user_id;
    int gpu_demand = 1;
    GpuBucket bucket = GpuBucket::B1;
    Minutes submit_time = 0.0;
    double work = 0.0;
    JobStatus status = JobStatus::Pending;
    Minutes first_start = -1.0;   // first cluster execution; -1 if never ran
    Minutes finish_time = -1.0;
    double queueing_delay = 0.0;  // submit -> first start (or terminal if never ran)
    double total_wait = 0.0;      // queued time over all episodes
    std::vector<DelayInterval> ledger;
    double reserved_cores = 0.0;  // proportional host bookkeeping at submit
    double gpu_time = 0.0;        // cluster occupancy, minutes x GPUs
    double pool_time = 0.0;       // pre-run pool occupancy (1 GPU)
    int executions = 0;
    int failures = 0;
    int preemptions = 0;
    int migrations = 0;
    int servers_used = 0;         // footprint of the last placement
    int racks_used = 0;
    bool colocated = false;
    double slowdown = 0.0;
    int placement_stage = -1;     // smallest relaxation stage admitting the placement
    int constraint_stage = -1;    // stage of the constraint in force when placed
    bool ooo_placed = false;
    bool bypassed_by_ooo = false;
    bool has_loss_curve = false;
};

struct UtilizationHistogram {
    std::array<int64_t, 101> bins{}; // one bin per utilization percent
    int64_t count = 0;
    double sum = 0.0;

    void add(double percent);
    double mean() const { return count > 0 ? sum / count : 0.0; }
    void merge(const UtilizationHistogram& other);
};

struct ClusterSnapshot {
    Minutes time = 0.0;
    double allocated_fraction = 0.0;
    double empty_server_fraction = 0.0;
};

struct OooDecisionTrace {
    Minutes time = 0.0;
    int placed_job = -1;                // index into inputs.jobs
    std::vector<int> waiting_jobs;      // jobs queued ahead at decision time
};

struct RunResult {
    std::vector<JobOutcome> outcomes;   // aligned with inputs.jobs
    std::vector<FailureRecord> failure_records;

    std::array<UtilizationHistogram, kGpuBucketCount> util_by_bucket;
    std::map<std::string, UtilizationHistogram> util_by_status;
    std::map<int, UtilizationHistogram> util_16gpu_by_spread;

    int64_t placements = 0;
    int64_t ooo_placements = 0;
    int64_t colocated_placements = 0;
    std::vector<OooDecisionTrace> ooo_decisions; // only with harmless analysis on

    std::vector<ClusterSnapshot> snapshots;
    uint64_t events_processed = 0;
    Minutes end_time = 0.0;

    // Safety instrumentation (all must stay zero on a healthy run).
    int64_t gang_violations = 0;        // placement with slot count != demand
    int64_t reconcile_violations = 0;   // allocation state failed a recount
    int64_t hold_timeout_violations = 0;// partial hold outlived the timeout
    double max_hold_minutes = 0.0;
};

/// Runs the full lifecycle to completion. Deterministic for fixed inputs.
/// Throws LivelockGuard when the event cap is exceeded.
RunResult run_simulation(const SimInputs& inputs);

} // namespace gpusim
