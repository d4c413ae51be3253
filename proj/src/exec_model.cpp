#include "gpusim/exec_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gpusim/log.hpp"

namespace gpusim {

std::string PlacementClass::name() const {
    if (servers_used == 1) {
        return colocated ? "IntraServer" : "SameServer";
    }
    std::string base = "Spread" + std::to_string(servers_used);
    return colocated ? base + "+coloc" : base;
}

PlacementClass placement_class(const std::vector<Slot>& slots, const AllocationState& state) {
    PlacementClass cls;
    std::set<int> servers;
    for (const Slot& s : slots) {
        servers.insert(s.server);
    }
    cls.servers_used = static_cast<int>(servers.size());
    const JobHandle self = slots.empty() ? kNoJob : state.holder_of(slots.front());
    for (int srv : servers) {
        for (JobHandle other : state.distinct_jobs_on(srv)) {
            if (other != self) {
                cls.colocated = true;
                return cls;
            }
        }
    }
    return cls;
}

int racks_spanned(const std::vector<Slot>& slots, const ClusterTopology& topo) {
    std::set<int> racks;
    for (const Slot& s : slots) {
        racks.insert(topo.server_rack[s.server]);
    }
    return static_cast<int>(racks.size());
}

namespace {

// Linear interpolation in log2(n) between anchor points; clamps outside.
double log2_interp(const std::map<int, double>& anchors, int n) {
    if (anchors.empty()) return 0.0;
    auto it = anchors.lower_bound(n);
    if (it != anchors.end() && it->first == n) return it->second;
    if (it == anchors.begin()) return it->second;
    if (it == anchors.end()) return std::prev(it)->second;
    auto lo = std::prev(it);
    const double x0 = std::log2(static_cast<double>(lo->first));
    const double x1 = std::log2(static_cast<double>(it->first));
    const double x = std::log2(static_cast<double>(n));
    const double t = (x - x0) / (x1 - x0);
    return lo->second + t * (it->second - lo->second);
}

double throughput_of(const PlacementClass& cls, const SlowdownTable& table, bool& exact) {
    exact = true;
    if (cls.servers_used == 1) {
        return cls.colocated ? table.intra_server : table.same_server;
    }
    const auto& anchors = cls.colocated ? table.spread_colocated : table.spread_dedicated;
    if (anchors.count(cls.servers_used) == 0) {
        exact = false;
    }
    return log2_interp(anchors, cls.servers_used);
}

} // namespace

double slowdown_factor(const PlacementClass& cls, const SlowdownTable& table) {
    bool exact = true;
    const double tp = throughput_of(cls, table, exact);
    if (!exact) {
        log::debug("slowdown for " + cls.name() + " interpolated/clamped from spread anchors");
    }
    if (tp <= 0.0) {
        log::warn("non-positive throughput for " + cls.name() + "; falling back to SameServer");
        return 1.0;
    }
    return table.same_server / tp;
}

double utilization_mean(int gpu_demand, const PlacementClass& cls, const SlowdownTable& table) {
    if (gpu_demand == 16 && cls.servers_used >= 2) {
        return log2_interp(table.spread_utilization_16, cls.servers_used);
    }
    double base = log2_interp(table.size_utilization, gpu_demand);
    if (cls.servers_used >= 2 && gpu_demand != 16) {
        // Spread degradation ratio transferred from the 16-GPU anchors.
        const double at2 = log2_interp(table.spread_utilization_16, 2);
        if (at2 > 0.0) {
            base *= log2_interp(table.spread_utilization_16, cls.servers_used) / at2;
        }
    }
    return std::clamp(base, 0.0, 100.0);
}

double utilization_sample(int gpu_demand, const PlacementClass& cls, const SlowdownTable& table,
                          RngStream& rng) {
    const double mean = utilization_mean(gpu_demand, cls, table);
    return std::clamp(rng.normal(mean, table.utilization_sigma), 0.0, 100.0);
}

std::vector<UtilizationSamplePoint> utilization_trace(int gpu_demand, const PlacementClass& cls,
                                                      Minutes start, Minutes duration,
                                                      const SlowdownTable& table, RngStream& rng) {
    std::vector<UtilizationSamplePoint> samples;
    const int minutes = static_cast<int>(std::floor(duration));
    samples.reserve(minutes);
    for (int m = 0; m < minutes; ++m) {
        samples.push_back({start + m, utilization_sample(gpu_demand, cls, table, rng)});
    }
    return samples;
}

double epochs_to_threshold(const std::vector<double>& loss_curve, double delta) {
    if (loss_curve.empty()) {
        throw EmptyCurve();
    }
    const double min_loss = *std::min_element(loss_curve.begin(), loss_curve.end());
    const double threshold = (1.0 + delta) * min_loss;
    for (std::size_t i = 0; i < loss_curve.size(); ++i) {
        if (loss_curve[i] <= threshold) {
            return static_cast<double>(i + 1) / static_cast<double>(loss_curve.size());
        }
    }
    return 1.0; // unreachable: the minimum itself satisfies the threshold
}

namespace {

std::vector<std::pair<double, double>> fraction_cdf(std::vector<double> values) {
    std::vector<std::pair<double, double>> cdf;
    if (values.empty()) return cdf;
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i + 1 == values.size() || values[i + 1] != values[i]) {
            cdf.emplace_back(values[i], static_cast<double>(i + 1) / n);
        }
    }
    return cdf;
}

} // namespace

ConvergenceReport convergence_report(const std::vector<ConvergenceInput>& jobs, double delta) {
    ConvergenceReport report;
    report.delta = delta;
    std::vector<double> passed_fracs;
    std::vector<double> killed_fracs;
    double passed_time = 0.0, passed_past = 0.0;
    double killed_time = 0.0, killed_past = 0.0;
    for (const ConvergenceInput& in : jobs) {
        if (in.loss_curve == nullptr || in.loss_curve->empty()) continue;
        const double frac = epochs_to_threshold(*in.loss_curve, delta);
        if (in.status == JobStatus::Passed) {
            passed_fracs.push_back(frac);
            passed_time += in.gpu_time;
            passed_past += (1.0 - frac) * in.gpu_time;
        } else if (in.status == JobStatus::Killed) {
            killed_fracs.push_back(frac);
            killed_time += in.gpu_time;
            killed_past += (1.0 - frac) * in.gpu_time;
        }
    }
    report.passed_jobs = static_cast<int>(passed_fracs.size());
    report.killed_jobs = static_cast<int>(killed_fracs.size());
    report.passed_fraction_cdf = fraction_cdf(std::move(passed_fracs));
    report.killed_fraction_cdf = fraction_cdf(std::move(killed_fracs));
    report.passed_gpu_time_share_past = passed_time > 0.0 ? passed_past / passed_time : 0.0;
    report.killed_gpu_time_share_past = killed_time > 0.0 ? killed_past / killed_time : 0.0;
    return report;
}

} // namespace gpusim
