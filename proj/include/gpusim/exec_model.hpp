#pragma once

#include <map>
#include <string>
#include <vector>

#include "gpusim/cluster.hpp"
#include "gpusim/engine.hpp"
#include "gpusim/workload.hpp"

namespace gpusim {

/**
 * Locality/colocation configuration of a running gang. servers_used = 1 and
 * no foreign job on the server is the dedicated single-server case; the
 * colocated flag marks foreign jobs sharing any of the gang's servers.
 */
struct PlacementClass {
    int servers_used = 1;
    bool colocated = false;

    bool same_server() const { return servers_used == 1 && !colocated; }
    bool intra_server() const { return servers_used == 1 && colocated; }

    std::string name() const;
    bool operator==(const PlacementClass&) const = default;
};

/// Classifies a complete gang placement against the current allocation.
PlacementClass placement_class(const std::vector<Slot>& slots, const AllocationState& state);

/// Number of distinct racks a placement spans.
int racks_spanned(const std::vector<Slot>& slots, const ClusterTopology& topo);

/**
 * Calibration for throughput and utilization. Throughput entries are
 * normalized images/s-style numbers; slowdown factors are ratios against the
 * single dedicated server case. Spread anchors cover servers_used in
 * {2,4,8}; other spreads interpolate linearly in log2(servers) and clamp
 * beyond the outermost anchors.
 */
struct SlowdownTable {
    // Throughput by class (2-GPU experiment scale).
    double same_server = 114.8;
    double diff_server = 98.0;
    double intra_server = 75.6;
    double inter_server = 74.1;
    // Throughput anchors for dedicated/colocated spreads.
    std::map<int, double> spread_dedicated{{2, 98.0}, {4, 91.9}, {8, 64.1}};
    std::map<int, double> spread_colocated{{2, 74.1}, {4, 69.5}, {8, 48.5}};

    // Mean per-minute GPU utilization (percent).
    std::map<int, double> size_utilization{{1, 52.38}, {4, 45.18}, {8, 58.99}, {16, 40.39}};
    std::map<int, double> spread_utilization_16{{2, 43.66}, {4, 40.94}, {8, 28.56}};
    double utilization_sigma = 15.0;
};

/// Throughput ratio same_server / class; >= 1, equal only for SameServer.
/// Unknown spreads fall back to the nearest anchor (logged once).
double slowdown_factor(const PlacementClass& cls, const SlowdownTable& table);

/// Mean utilization percent for a job of this size on this placement.
double utilization_mean(int gpu_demand, const PlacementClass& cls, const SlowdownTable& table);

struct UtilizationSamplePoint {
    Minutes minute = 0.0;
    double percent = 0.0;
};

/// Per-minute samples: truncated normal around the calibrated mean, clamped
/// to [0,100]. Deterministic for a fixed rng state.
std::vector<UtilizationSamplePoint> utilization_trace(int gpu_demand, const PlacementClass& cls,
                                                      Minutes start, Minutes duration,
                                                      const SlowdownTable& table, RngStream& rng);

/// Single draw from the same distribution (streaming aggregation path).
double utilization_sample(int gpu_demand, const PlacementClass& cls, const SlowdownTable& table,
                          RngStream& rng);

/// Fraction of epochs needed to reach within (1+delta) of the minimum loss:
/// (1 + first index at or below the threshold) / length. Throws EmptyCurve.
double epochs_to_threshold(const std::vector<double>& loss_curve, double delta);

struct ConvergenceReport {
    // CDF points over the per-job fraction of epochs, for the given delta.
    std::vector<std::pair<double, double>> passed_fraction_cdf;
    std::vector<std::pair<double, double>> killed_fraction_cdf;
    // GPU-time share spent past the threshold epoch, per status.
    double passed_gpu_time_share_past = 0.0;
    double killed_gpu_time_share_past = 0.0;
    double delta = 0.0;
    int passed_jobs = 0;
    int killed_jobs = 0;
};

struct ConvergenceInput {
    JobStatus status = JobStatus::Passed;
    const std::vector<double>* loss_curve = nullptr;
    double gpu_time = 0.0;
};

ConvergenceReport convergence_report(const std::vector<ConvergenceInput>& jobs, double delta);

} // namespace gpusim
