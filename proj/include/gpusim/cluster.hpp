#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gpusim/errors.hpp"

namespace gpusim {

using JobHandle = int32_t;
constexpr JobHandle kNoJob = -1;

struct Server {
    std::string server_id;
    int gpu_count = 0;
    int cpu_cores = 0;
    int mem_gb = 0;
};

struct Rack {
    std::string rack_id;
    std::vector<Server> servers;
};

/// One rack group in a topology description: `servers` identical machines.
struct RackSpec {
    int servers = 0;
    int gpus_per_server = 0;
    int cpu_cores = 0;
    int mem_gb = 0;
};

/**
 * Immutable cluster shape. Racks are RDMA domains; servers within a rack
 * share one SKU. Servers are also addressable by a dense global index for
 * the allocation state.
 */
struct ClusterTopology {
    std::vector<Rack> racks;

    // Dense caches, filled by build_topology.
    int total_gpus = 0;
    int total_servers = 0;
    int max_gpus_per_server = 0;
    std::vector<int> server_rack;   // global server index -> rack index
    std::vector<int> server_gpus;   // global server index -> gpu count
    std::vector<int> server_cores;  // global server index -> cpu cores
    std::vector<int> rack_first;    // rack index -> first global server index

    int server_count_in(int rack_idx) const {
        return static_cast<int>(racks[rack_idx].servers.size());
    }
    const Server& server(int global_idx) const {
        return racks[server_rack[global_idx]].servers[global_idx - rack_first[server_rack[global_idx]]];
    }
};

/// Builds and validates a topology from rack groups. Ids are generated as
/// "rackN" / "rackN/srvM". Throws EmptyTopology or MixedSkuInRack.
ClusterTopology build_topology(const std::vector<RackSpec>& spec);

/// Variant taking explicit racks (ids supplied by the caller); validates
/// uniqueness and per-rack SKU homogeneity.
ClusterTopology build_topology(std::vector<Rack> racks);

struct Slot {
    int server = 0; // global server index
    int gpu = 0;    // gpu index within the server

    bool operator==(const Slot&) const = default;
    bool operator<(const Slot& o) const {
        return server != o.server ? server < o.server : gpu < o.gpu;
    }
};

/**
 * Who holds each GPU right now. Two layers:
 *  - holder: gang allocations of RUNNING jobs. VC usage counters cover
 *    exactly these slots.
 *  - held: partial acquisitions of pending attempts. Held slots block other
 *    jobs but do not count as VC usage until the gang completes.
 */
class AllocationState {
public:
    AllocationState() = default;
    explicit AllocationState(const ClusterTopology& topo);

    // --- running allocations -------------------------------------------
    /// Atomically assigns all slots to job_id; throws SlotBusy (state
    /// unchanged) if any slot is allocated or held by another job.
    void allocate(JobHandle job, const std::string& vc_id, const std::vector<Slot>& slots);
    /// Releases every slot held or allocated by the job; returns the slots freed.
    std::vector<Slot> release(JobHandle job);

    // --- pending attempt holds ------------------------------------------
    void hold(JobHandle job, const Slot& slot);
    /// Releases only attempt holds of this job (allocations untouched).
    std::vector<Slot> release_holds(JobHandle job);

    JobHandle holder_of(const Slot& s) const { return holder_[s.server][s.gpu]; }
    JobHandle held_by(const Slot& s) const { return held_[s.server][s.gpu]; }
    bool slot_free(const Slot& s) const {
        return holder_[s.server][s.gpu] == kNoJob && held_[s.server][s.gpu] == kNoJob;
    }

    /// GPUs on the server neither allocated nor held.
    int acquirable_on(int server) const { return server_gpus_[server] - alloc_count_[server] - hold_count_[server]; }
    /// GPUs on the server not allocated to a running job (holds ignored).
    int unallocated_on(int server) const { return server_gpus_[server] - alloc_count_[server]; }
    int allocated_on(int server) const { return alloc_count_[server]; }
    int hold_count_on(int server) const { return hold_count_[server]; }
    bool server_untouched(int server) const { return alloc_count_[server] == 0 && hold_count_[server] == 0; }

    int total_allocated() const { return total_allocated_; }
    int total_held() const { return total_held_; }
    int total_gpus() const { return total_gpus_; }
    int total_acquirable() const { return total_gpus_ - total_allocated_ - total_held_; }

    const std::map<std::string, int>& vc_usage() const { return vc_usage_; }
    int usage_of(const std::string& vc_id) const;

    std::vector<Slot> slots_of(JobHandle job) const;
    std::vector<Slot> holds_of(JobHandle job) const;
    /// Distinct jobs with allocations on the server, ascending handle.
    std::vector<JobHandle> distinct_jobs_on(int server) const;

    /// Bumped on every allocate/release/hold change; lets schedulers skip
    /// re-attempts when nothing moved.
    uint64_t version() const { return version_; }

    /// Full recount of counters against the holder maps (test hook).
    bool reconcile() const;

    int server_count() const { return static_cast<int>(server_gpus_.size()); }
    int gpus_on_server(int server) const { return server_gpus_[server]; }

private:
    std::vector<std::vector<JobHandle>> holder_; // [server][gpu] -> running job
    std::vector<std::vector<JobHandle>> held_;   // [server][gpu] -> acquiring job
    std::vector<int> server_gpus_;
    std::vector<int> alloc_count_;
    std::vector<int> hold_count_;
    std::map<std::string, int> vc_usage_;
    std::map<JobHandle, std::string> job_vc_;
    std::map<JobHandle, std::vector<Slot>> job_slots_;
    std::map<JobHandle, std::vector<Slot>> job_holds_;
    int total_allocated_ = 0;
    int total_held_ = 0;
    int total_gpus_ = 0;
    uint64_t version_ = 0;
};

struct ServerRank {
    int server = 0;      // global index
    int free_gpus = 0;   // acquirable
};

struct RackRank {
    int rack = 0;
    int free_gpus = 0;
    std::vector<ServerRank> servers;
};

/// Racks by decreasing free GPU count, servers within a rack the same way,
/// ties broken by ascending id. Recomputed from scratch on every call.
struct CandidateRanking {
    std::vector<RackRank> racks;
};

CandidateRanking rank_candidates(const AllocationState& state, const ClusterTopology& topo);

struct FragmentationReport {
    double empty_server_fraction = 0.0;            // servers with every GPU free / servers
    std::map<std::string, int> empty_servers_per_rack;
};

FragmentationReport fragmentation_report(const AllocationState& state, const ClusterTopology& topo);

} // namespace gpusim
