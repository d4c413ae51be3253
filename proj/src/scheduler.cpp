#include "gpusim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace gpusim {

LocalityConstraint initial_constraint(int gpu_demand, const ClusterTopology& topo) {
    LocalityConstraint c;
    c.max_servers = std::max(1, (gpu_demand + topo.max_gpus_per_server - 1) / topo.max_gpus_per_server);
    c.require_single_rdma_domain = true;
    return c;
}

LocalityConstraint relax(const LocalityConstraint& initial, int stage, const ClusterTopology& topo) {
    LocalityConstraint c = initial;
    for (int s = 0; s < stage; ++s) {
        if (c.max_servers >= topo.total_servers) break;
        c.max_servers = std::min(c.max_servers * 2, topo.total_servers);
    }
    if (stage >= 2) {
        c.require_single_rdma_domain = false;
    }
    return c;
}

int relax_stage(int retry_count, int relax_after) {
    if (relax_after <= 0) return 0;
    return retry_count / relax_after;
}

int placement_relax_stage(const LocalityConstraint& initial, int servers_used, int racks_used,
                          const ClusterTopology& topo) {
    for (int stage = 0;; ++stage) {
        LocalityConstraint c = relax(initial, stage, topo);
        const bool servers_ok = servers_used <= c.max_servers;
        const bool rack_ok = !c.require_single_rdma_domain || racks_used <= 1;
        if (servers_ok && rack_ok) {
            return stage;
        }
        if (c.max_servers >= topo.total_servers && !c.require_single_rdma_domain) {
            return stage; // fully relaxed admits everything
        }
    }
}

DelayCause classify_delay_cause(int vc_usage, int vc_quota, int gpu_demand) {
    return vc_usage + gpu_demand > vc_quota ? DelayCause::FairShare : DelayCause::Fragmentation;
}

double proportional_cores(int gpus_taken, int server_gpus, int server_cores) {
    if (server_gpus <= 0) return 0.0;
    return static_cast<double>(server_cores) * gpus_taken / server_gpus;
}

namespace {

// A server the job may draw GPUs from, with its current acquirable count.
struct Candidate {
    int server = 0;
    int rack = 0;
    int free_gpus = 0;
    bool already_used = false; // job holds slots there already
};

bool server_admissible(int server, const AllocationState& state, bool dedicated,
                       const std::set<int>& held_servers) {
    if (!dedicated) return true;
    if (held_servers.count(server)) return true;
    return state.server_untouched(server);
}

std::vector<Slot> take_from(int server, int count, const AllocationState& state) {
    std::vector<Slot> slots;
    const int gpus = state.gpus_on_server(server);
    for (int g = 0; g < gpus && static_cast<int>(slots.size()) < count; ++g) {
        Slot s{server, g};
        if (state.slot_free(s)) {
            slots.push_back(s);
        }
    }
    return slots;
}

// Greedy fill over an ordered candidate list; respects the server budget.
// Returns the slots taken; sets complete when the whole remainder fits.
std::vector<Slot> greedy_fill(const std::vector<Candidate>& order, int remaining, int server_budget,
                              const AllocationState& state, bool& complete) {
    std::vector<Slot> taken;
    int new_servers = 0;
    for (const Candidate& c : order) {
        if (remaining <= 0) break;
        if (c.free_gpus <= 0) continue;
        if (!c.already_used) {
            if (new_servers >= server_budget) continue;
        }
        const int want = std::min(c.free_gpus, remaining);
        std::vector<Slot> slots = take_from(c.server, want, state);
        if (slots.empty()) continue;
        if (!c.already_used) ++new_servers;
        remaining -= static_cast<int>(slots.size());
        taken.insert(taken.end(), slots.begin(), slots.end());
    }
    complete = remaining <= 0;
    return taken;
}

} // namespace

AcquirePlan plan_acquisition(int gpu_demand, const LocalityConstraint& constraint,
                             const AllocationState& state, const ClusterTopology& topo,
                             const std::vector<Slot>& held, bool dedicated) {
    AcquirePlan plan;
    const int remaining = gpu_demand - static_cast<int>(held.size());
    if (remaining <= 0) {
        plan.complete = true;
        return plan;
    }

    std::set<int> held_servers;
    std::set<int> held_racks;
    for (const Slot& s : held) {
        held_servers.insert(s.server);
        held_racks.insert(topo.server_rack[s.server]);
    }
    // Server budget = how many servers the gang may still add.
    const int server_budget = std::max(0, constraint.max_servers - static_cast<int>(held_servers.size()));

    const CandidateRanking ranking = rank_candidates(state, topo);

    auto candidates_in_rack = [&](const RackRank& rr) {
        std::vector<Candidate> order;
        for (const ServerRank& sr : rr.servers) {
            if (!server_admissible(sr.server, state, dedicated, held_servers)) continue;
            Candidate c;
            c.server = sr.server;
            c.rack = rr.rack;
            c.free_gpus = sr.free_gpus;
            c.already_used = held_servers.count(sr.server) > 0;
            order.push_back(c);
        }
        return order;
    };

    if (constraint.require_single_rdma_domain) {
        // The gang must stay inside one rack. Once slots are held the rack is
        // committed until the attempt times out.
        if (!held_racks.empty()) {
            const int rack = *held_racks.begin();
            for (const RackRank& rr : ranking.racks) {
                if (rr.rack != rack) continue;
                bool complete = false;
                plan.take = greedy_fill(candidates_in_rack(rr), remaining, server_budget, state, complete);
                plan.complete = complete;
                return plan;
            }
            return plan;
        }
        // Prefer the first rack (in rank order) where the gang completes now.
        for (const RackRank& rr : ranking.racks) {
            bool complete = false;
            std::vector<Slot> taken =
                greedy_fill(candidates_in_rack(rr), remaining, server_budget, state, complete);
            if (complete) {
                plan.take = std::move(taken);
                plan.complete = true;
                return plan;
            }
        }
        // No rack completes: hold in the top-ranked rack with any capacity.
        for (const RackRank& rr : ranking.racks) {
            bool complete = false;
            std::vector<Slot> taken =
                greedy_fill(candidates_in_rack(rr), remaining, server_budget, state, complete);
            if (!taken.empty()) {
                plan.take = std::move(taken);
                plan.complete = false;
                return plan;
            }
        }
        return plan;
    }

    // Relaxed placement: servers ordered by free count globally (ties by id),
    // packing onto as few servers as possible.
    std::vector<Candidate> order;
    for (const RackRank& rr : ranking.racks) {
        auto rack_order = candidates_in_rack(rr);
        order.insert(order.end(), rack_order.begin(), rack_order.end());
    }
    std::sort(order.begin(), order.end(), [](const Candidate& a, const Candidate& b) {
        if (a.free_gpus != b.free_gpus) return a.free_gpus > b.free_gpus;
        return a.server < b.server;
    });
    bool complete = false;
    plan.take = greedy_fill(order, remaining, server_budget, state, complete);
    plan.complete = complete;
    return plan;
}

std::vector<PreemptAction> plan_preemption(const AllocationState& state,
                                           const std::map<std::string, VirtualClusterSpec>& vcs,
                                           const std::map<std::string, int>& queued_head_demand,
                                           const std::vector<RunningJobInfo>& running, double threshold) {
    std::vector<PreemptAction> actions;
    if (state.total_gpus() == 0) return actions;
    const double usage_frac = static_cast<double>(state.total_allocated()) / state.total_gpus();
    if (usage_frac < threshold) return actions;

    // Beneficiary: most underserved VC with a head that fits inside its quota.
    std::string beneficiary;
    int need = 0;
    double best_ratio = 0.0;
    for (const auto& [vc_id, spec] : vcs) {
        auto it = queued_head_demand.find(vc_id);
        if (it == queued_head_demand.end()) continue;
        const int usage = state.usage_of(vc_id);
        if (usage + it->second > spec.quota) continue;
        const double ratio = spec.quota > 0 ? static_cast<double>(usage) / spec.quota : 1.0;
        if (beneficiary.empty() || ratio < best_ratio) {
            beneficiary = vc_id;
            best_ratio = ratio;
            need = it->second;
        }
    }
    if (beneficiary.empty()) return actions;

    // Victim VC: the one most over quota.
    std::string victim_vc;
    int excess = 0;
    for (const auto& [vc_id, spec] : vcs) {
        const int over = state.usage_of(vc_id) - spec.quota;
        if (over > excess) {
            excess = over;
            victim_vc = vc_id;
        }
    }
    if (victim_vc.empty()) return actions;

    // Youngest-first victims; never push the victim VC below its quota.
    std::vector<RunningJobInfo> candidates;
    for (const RunningJobInfo& info : running) {
        if (info.vc_id == victim_vc) candidates.push_back(info);
    }
    std::sort(candidates.begin(), candidates.end(), [](const RunningJobInfo& a, const RunningJobInfo& b) {
        if (a.seg_start != b.seg_start) return a.seg_start > b.seg_start;
        return a.job > b.job;
    });
    int freed = 0;
    int usage_left = state.usage_of(victim_vc);
    const int quota = vcs.at(victim_vc).quota;
    for (const RunningJobInfo& info : candidates) {
        if (freed >= need) break;
        if (usage_left - info.gpu_demand < quota) continue;
        PreemptAction action;
        action.victim = info.job;
        action.victim_vc = victim_vc;
        action.beneficiary_vc = beneficiary;
        action.freed_gpus = info.gpu_demand;
        actions.push_back(action);
        freed += info.gpu_demand;
        usage_left -= info.gpu_demand;
    }
    return actions;
}

} // namespace gpusim
