#include "gpusim/cluster.hpp"

#include <algorithm>
#include <set>

namespace gpusim {

ClusterTopology build_topology(const std::vector<RackSpec>& spec) {
    std::vector<Rack> racks;
    racks.reserve(spec.size());
    for (std::size_t r = 0; r < spec.size(); ++r) {
        const RackSpec& rs = spec[r];
        Rack rack;
        rack.rack_id = "rack" + std::to_string(r);
        for (int s = 0; s < rs.servers; ++s) {
            Server srv;
            srv.server_id = rack.rack_id + "/srv" + std::to_string(s);
            srv.gpu_count = rs.gpus_per_server;
            srv.cpu_cores = rs.cpu_cores;
            srv.mem_gb = rs.mem_gb;
            rack.servers.push_back(std::move(srv));
        }
        racks.push_back(std::move(rack));
    }
    return build_topology(std::move(racks));
}

ClusterTopology build_topology(std::vector<Rack> racks) {
    if (racks.empty()) {
        throw EmptyTopology();
    }
    std::set<std::string> rack_ids;
    std::set<std::string> server_ids;
    ClusterTopology topo;
    topo.racks = std::move(racks);
    for (std::size_t r = 0; r < topo.racks.size(); ++r) {
        const Rack& rack = topo.racks[r];
        if (rack.servers.empty()) {
            throw EmptyTopology();
        }
        if (!rack_ids.insert(rack.rack_id).second) {
            throw ConfigError("duplicate rack_id " + rack.rack_id);
        }
        const int sku = rack.servers.front().gpu_count;
        topo.rack_first.push_back(topo.total_servers);
        for (const Server& srv : topo.racks[r].servers) {
            if (srv.gpu_count < 1) {
                throw ConfigError("server " + srv.server_id + " has gpu_count < 1");
            }
            if (srv.gpu_count != sku) {
                throw MixedSkuInRack(rack.rack_id + " mixes " + std::to_string(sku) + "-GPU and " +
                                     std::to_string(srv.gpu_count) + "-GPU servers");
            }
            if (!server_ids.insert(srv.server_id).second) {
                throw ConfigError("duplicate server_id " + srv.server_id);
            }
            topo.server_rack.push_back(static_cast<int>(r));
            topo.server_gpus.push_back(srv.gpu_count);
            topo.server_cores.push_back(srv.cpu_cores);
            topo.total_gpus += srv.gpu_count;
            topo.max_gpus_per_server = std::max(topo.max_gpus_per_server, srv.gpu_count);
            ++topo.total_servers;
        }
    }
    return topo;
}

AllocationState::AllocationState(const ClusterTopology& topo) {
    holder_.resize(topo.total_servers);
    held_.resize(topo.total_servers);
    server_gpus_ = topo.server_gpus;
    alloc_count_.assign(topo.total_servers, 0);
    hold_count_.assign(topo.total_servers, 0);
    for (int s = 0; s < topo.total_servers; ++s) {
        holder_[s].assign(topo.server_gpus[s], kNoJob);
        held_[s].assign(topo.server_gpus[s], kNoJob);
    }
    total_gpus_ = topo.total_gpus;
}

void AllocationState::allocate(JobHandle job, const std::string& vc_id, const std::vector<Slot>& slots) {
    // All-or-nothing: validate every slot before touching state.
    for (const Slot& s : slots) {
        if (holder_[s.server][s.gpu] != kNoJob) {
            throw SlotBusy("server " + std::to_string(s.server) + " gpu " + std::to_string(s.gpu) +
                           " allocated to job " + std::to_string(holder_[s.server][s.gpu]));
        }
        JobHandle h = held_[s.server][s.gpu];
        if (h != kNoJob && h != job) {
            throw SlotBusy("server " + std::to_string(s.server) + " gpu " + std::to_string(s.gpu) +
                           " held by job " + std::to_string(h));
        }
    }
    for (const Slot& s : slots) {
        if (held_[s.server][s.gpu] == job) {
            held_[s.server][s.gpu] = kNoJob;
            --hold_count_[s.server];
            --total_held_;
        }
        holder_[s.server][s.gpu] = job;
        ++alloc_count_[s.server];
        ++total_allocated_;
    }
    auto& holds = job_holds_[job];
    std::erase_if(holds, [&](const Slot& s) { return holder_[s.server][s.gpu] == job; });
    if (holds.empty()) job_holds_.erase(job);
    auto& rec = job_slots_[job];
    rec.insert(rec.end(), slots.begin(), slots.end());
    std::sort(rec.begin(), rec.end());
    job_vc_[job] = vc_id;
    vc_usage_[vc_id] += static_cast<int>(slots.size());
    ++version_;
}

std::vector<Slot> AllocationState::release(JobHandle job) {
    std::vector<Slot> freed = release_holds(job);
    auto it = job_slots_.find(job);
    if (it != job_slots_.end()) {
        for (const Slot& s : it->second) {
            holder_[s.server][s.gpu] = kNoJob;
            --alloc_count_[s.server];
            --total_allocated_;
            freed.push_back(s);
        }
        auto vcit = job_vc_.find(job);
        vc_usage_[vcit->second] -= static_cast<int>(it->second.size());
        job_vc_.erase(vcit);
        job_slots_.erase(it);
    }
    if (!freed.empty()) ++version_;
    return freed;
}

void AllocationState::hold(JobHandle job, const Slot& slot) {
    if (holder_[slot.server][slot.gpu] != kNoJob || held_[slot.server][slot.gpu] != kNoJob) {
        throw SlotBusy("hold on occupied slot server " + std::to_string(slot.server) +
                       " gpu " + std::to_string(slot.gpu));
    }
    held_[slot.server][slot.gpu] = job;
    ++hold_count_[slot.server];
    ++total_held_;
    job_holds_[job].push_back(slot);
    ++version_;
}

std::vector<Slot> AllocationState::release_holds(JobHandle job) {
    std::vector<Slot> freed;
    auto it = job_holds_.find(job);
    if (it == job_holds_.end()) {
        return freed;
    }
    for (const Slot& s : it->second) {
        held_[s.server][s.gpu] = kNoJob;
        --hold_count_[s.server];
        --total_held_;
        freed.push_back(s);
    }
    job_holds_.erase(it);
    ++version_;
    return freed;
}

int AllocationState::usage_of(const std::string& vc_id) const {
    auto it = vc_usage_.find(vc_id);
    return it == vc_usage_.end() ? 0 : it->second;
}

std::vector<Slot> AllocationState::slots_of(JobHandle job) const {
    auto it = job_slots_.find(job);
    return it == job_slots_.end() ? std::vector<Slot>{} : it->second;
}

std::vector<Slot> AllocationState::holds_of(JobHandle job) const {
    auto it = job_holds_.find(job);
    return it == job_holds_.end() ? std::vector<Slot>{} : it->second;
}

std::vector<JobHandle> AllocationState::distinct_jobs_on(int server) const {
    std::set<JobHandle> uniq;
    for (JobHandle h : holder_[server]) {
        if (h != kNoJob) uniq.insert(h);
    }
    return {uniq.begin(), uniq.end()};
}

bool AllocationState::reconcile() const {
    int alloc = 0;
    int held = 0;
    for (std::size_t s = 0; s < holder_.size(); ++s) {
        int a = 0;
        int h = 0;
        for (std::size_t g = 0; g < holder_[s].size(); ++g) {
            if (holder_[s][g] != kNoJob) ++a;
            if (held_[s][g] != kNoJob) ++h;
            if (holder_[s][g] != kNoJob && held_[s][g] != kNoJob) return false; // double booking
        }
        if (a != alloc_count_[s] || h != hold_count_[s]) return false;
        alloc += a;
        held += h;
    }
    if (alloc != total_allocated_ || held != total_held_) return false;
    int usage = 0;
    for (const auto& [vc, n] : vc_usage_) {
        if (n < 0) return false;
        usage += n;
    }
    return usage == total_allocated_;
}

CandidateRanking rank_candidates(const AllocationState& state, const ClusterTopology& topo) {
    CandidateRanking ranking;
    ranking.racks.reserve(topo.racks.size());
    for (std::size_t r = 0; r < topo.racks.size(); ++r) {
        RackRank rr;
        rr.rack = static_cast<int>(r);
        const int first = topo.rack_first[r];
        const int count = topo.server_count_in(static_cast<int>(r));
        rr.servers.reserve(count);
        for (int s = first; s < first + count; ++s) {
            ServerRank sr;
            sr.server = s;
            sr.free_gpus = state.acquirable_on(s);
            rr.free_gpus += sr.free_gpus;
            rr.servers.push_back(sr);
        }
        std::sort(rr.servers.begin(), rr.servers.end(), [](const ServerRank& a, const ServerRank& b) {
            if (a.free_gpus != b.free_gpus) return a.free_gpus > b.free_gpus;
            return a.server < b.server;
        });
        ranking.racks.push_back(std::move(rr));
    }
    std::sort(ranking.racks.begin(), ranking.racks.end(), [](const RackRank& a, const RackRank& b) {
        if (a.free_gpus != b.free_gpus) return a.free_gpus > b.free_gpus;
        return a.rack < b.rack;
    });
    return ranking;
}

FragmentationReport fragmentation_report(const AllocationState& state, const ClusterTopology& topo) {
    FragmentationReport report;
    int empty = 0;
    for (std::size_t r = 0; r < topo.racks.size(); ++r) {
        int rack_empty = 0;
        const int first = topo.rack_first[r];
        for (int s = first; s < first + topo.server_count_in(static_cast<int>(r)); ++s) {
            if (state.server_untouched(s)) {
                ++rack_empty;
            }
        }
        report.empty_servers_per_rack[topo.racks[r].rack_id] = rack_empty;
        empty += rack_empty;
    }
    report.empty_server_fraction =
        topo.total_servers == 0 ? 0.0 : static_cast<double>(empty) / topo.total_servers;
    return report;
}

} // namespace gpusim
