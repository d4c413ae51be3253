#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpusim/cluster.hpp"
#include "gpusim/engine.hpp"
#include "gpusim/failure.hpp"
#include "gpusim/workload.hpp"

namespace gpusim {

struct SchedulerConfig {
    Minutes acquisition_timeout_min = 2.5;
    Minutes backoff_min = 2.0;
    int relax_after = 3;                  // retries per relaxation stage
    double preempt_threshold = 0.90;      // cluster usage fraction enabling preemption
    Minutes checkpoint_interval_min = 30.0;
    Minutes preempt_check_interval_min = 1.0;
    Minutes migration_interval_min = 10.0;
    Minutes migration_cost_min = 1.0;
    RetryPolicyKind retry_policy = RetryPolicyKind::Static;

    // Scenario switches
    bool wait_for_locality = false;
    Minutes extra_wait_min = 30.0;        // added wait before relaxation starts
    bool migration = false;
    bool dedicated_servers = false;
    bool prerun_pool = false;
    int pool_gpus = 4;
    Minutes pool_window_min = 15.0;       // screening run length on the pool

    bool ooo_harmless_analysis = false;   // counterfactual replays (costly)
    int ooo_harmless_max_decisions = 200;
};

struct VirtualClusterSpec {
    std::string vc_id;
    int quota = 0; // GPUs
};

struct LocalityConstraint {
    int max_servers = 1;
    bool require_single_rdma_domain = true;

    bool operator==(const LocalityConstraint&) const = default;
};

/// Tightest constraint for a demand: fewest servers that can hold it, within
/// one RDMA domain.
LocalityConstraint initial_constraint(int gpu_demand, const ClusterTopology& topo);

/// Applies `stage` relaxation steps: max_servers doubles per step (capped at
/// the server count); the single-domain requirement drops at stage 2.
/// Monotone weakening, idempotent at the cap.
LocalityConstraint relax(const LocalityConstraint& initial, int stage, const ClusterTopology& topo);

/// Stage reached after retry_count retries (one stage per relax_after).
int relax_stage(int retry_count, int relax_after);

/// Smallest stage whose constraint admits a placement with this footprint.
int placement_relax_stage(const LocalityConstraint& initial, int servers_used, int racks_used,
                          const ClusterTopology& topo);

enum class DelayCause { FairShare, Fragmentation };

struct DelayInterval {
    Minutes start = 0.0;
    Minutes end = 0.0;
    DelayCause cause = DelayCause::Fragmentation;
};

/// FairShare when the VC cannot fit the job inside its quota at the interval
/// start; Fragmentation otherwise.
DelayCause classify_delay_cause(int vc_usage, int vc_quota, int gpu_demand);

struct AcquirePlan {
    std::vector<Slot> take;   // additional slots to hold/allocate
    bool complete = false;    // true when held + take covers the demand
};

/**
 * Plans the next acquisition step for a gang. Walks the candidate ranking,
 * preferring placements that complete now; otherwise greedily accumulates
 * the most promising partial hold under the constraint. Pure (no mutation).
 * dedicated restricts candidates to servers free of foreign jobs.
 */
AcquirePlan plan_acquisition(int gpu_demand, const LocalityConstraint& constraint,
                             const AllocationState& state, const ClusterTopology& topo,
                             const std::vector<Slot>& held, bool dedicated);

/// Proportional host-resource bookkeeping: CPU cores reserved for a job on a
/// server, proportional to the GPU share it takes there.
double proportional_cores(int gpus_taken, int server_gpus, int server_cores);

struct PreemptAction {
    JobHandle victim = kNoJob;
    std::string victim_vc;
    std::string beneficiary_vc;
    int freed_gpus = 0;
};

/// Read-only snapshot the preemption rule needs about a running job.
struct RunningJobInfo {
    JobHandle job = kNoJob;
    std::string vc_id;
    int gpu_demand = 0;
    Minutes seg_start = 0.0;
};

/**
 * Fair-share preemption: fires only when cluster usage >= threshold and some
 * VC is over quota while another VC has a within-quota job queued. Victims
 * youngest-first from the most-over-quota VC until the beneficiary's head
 * fits, never pushing the victim VC below its quota.
 */
std::vector<PreemptAction> plan_preemption(const AllocationState& state,
                                           const std::map<std::string, VirtualClusterSpec>& vcs,
                                           const std::map<std::string, int>& queued_head_demand,
                                           const std::vector<RunningJobInfo>& running, double threshold);

} // namespace gpusim
