#pragma once

#include <cstdint>
#include <queue>
#include <string>
#include <vector>

#include "gpusim/errors.hpp"

namespace gpusim {

/// Simulation time is measured in minutes; fractional values are allowed.
using Minutes = double;

enum class EventKind {
    JobArrival,
    SchedAttempt,
    AcquisitionTimeout,
    BackoffExpired,
    JobFinish,
    FailureFired,
    PreemptCheck,
    UtilizationSample,
    MigrationCheck,
};

const char* event_kind_name(EventKind kind);

struct SimEvent {
    Minutes time = 0.0;
    uint64_t seq = 0;        // assigned by the queue, unique, monotonically increasing
    EventKind kind = EventKind::JobArrival;
    int32_t job = -1;        // dense job handle, -1 for cluster-wide events
    int32_t arg = 0;         // kind-specific discriminator
    uint64_t generation = 0; // stale events (cancelled finishes etc.) carry an old generation
};

/**
 * Totally ordered event queue with a virtual clock.
 * Dispatch order is ascending (time, seq); seq breaks ties by insertion order.
 */
class EventQueue {
public:
    Minutes now() const { return now_; }
    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }
    uint64_t popped_count() const { return popped_; }

    /// Schedules an event; throws PastEvent if ev.time < now().
    void schedule(SimEvent ev);

    /// Pops the globally minimal (time, seq) event and advances the clock to it.
    SimEvent pop();

    /// Time of the next event; requires !empty().
    Minutes peek_time() const { return heap_.top().time; }

private:
    struct Later {
        bool operator()(const SimEvent& a, const SimEvent& b) const {
            if (a.time != b.time) return a.time > b.time;
            return a.seq > b.seq;
        }
    };

    std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
    Minutes now_ = 0.0;
    uint64_t next_seq_ = 0;
    uint64_t popped_ = 0;
};

/**
 * Deterministic random substreams, one per concern, all derived from the
 * master seed. Draws on one substream do not perturb any other, so adding
 * or removing a consumer elsewhere cannot shift results. Substreams keyed
 * by (name, id) give per-job independence: dropping a job from a workload
 * leaves every other job's draws untouched.
 */
class RngStream {
public:
    RngStream() : state_(mix(0x9e3779b97f4a7c15ULL)) {}
    explicit RngStream(uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

    static RngStream from_master(uint64_t master_seed, const std::string& concern);
    static RngStream from_master(uint64_t master_seed, const std::string& concern, uint64_t id);

    uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Integer uniform in [0, n).
    uint64_t uniform_index(uint64_t n);
    /// Standard normal via Box-Muller (portable across standard libraries).
    double normal();
    double normal(double mean, double sigma);
    /// Exponential with the given mean.
    double exponential(double mean);
    /// Draw index from non-negative weights (sum > 0).
    std::size_t weighted_index(const std::vector<double>& weights);

private:
    static uint64_t mix(uint64_t x);
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace gpusim
