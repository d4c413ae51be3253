#include "gpusim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "gpusim/log.hpp"

namespace gpusim {

void UtilizationHistogram::add(double percent) {
    int bin = static_cast<int>(std::floor(percent));
    bin = std::clamp(bin, 0, 100);
    ++bins[bin];
    ++count;
    sum += percent;
}

void UtilizationHistogram::merge(const UtilizationHistogram& other) {
    for (std::size_t i = 0; i < bins.size(); ++i) bins[i] += other.bins[i];
    count += other.count;
    sum += other.sum;
}

namespace {

constexpr int32_t kArgSubmit = 0;   // JobArrival: initial submission
constexpr int32_t kArgPoolDone = 1; // JobArrival: pool screening finished
constexpr int32_t kArgResubmit = 1; // SchedAttempt: re-submission after a failure backoff
constexpr int32_t kArgKill = 1;     // JobFinish: user kill

constexpr double kHoldEps = 1e-6;

enum class JobPhase { NotArrived, PoolScreening, Queued, RetryBackoff, Running, Done };

struct Segment {
    Minutes start = 0.0;
    Minutes end = 0.0;
    PlacementClass pclass;
};

struct JobRuntime {
    JobPhase phase = JobPhase::NotArrived;
    JobStatus status = JobStatus::Pending;

    // queueing episode
    Minutes enqueue_time = 0.0;
    Minutes first_enqueue = -1.0;
    int retry_count = 0;
    bool in_backoff = false;
    bool attempt_active = false;
    uint64_t attempt_gen = 0;
    Minutes hold_started = -1.0;
    uint64_t last_try_version = ~0ULL;
    int last_try_stage = -1;

    // delay ledger
    bool interval_open = false;
    Minutes interval_start = 0.0;
    DelayCause interval_cause = DelayCause::Fragmentation;

    // execution
    int exec_seq = 0;      // execution draw index (pool screening consumes 0)
    int attempt_index = 0; // failed executions so far
    std::optional<FailureReason> prior_failure;
    std::optional<FailureDraw> pending_failure;
    uint64_t run_gen = 0;
    Minutes seg_start = 0.0;
    Minutes seg_dead = 0.0; // non-compute lead time (migration checkpointing)
    double remaining_per_gpu = 0.0;
    double slowdown = 1.0;
    PlacementClass pclass;
    std::vector<Segment> segments;
    bool kill_scheduled = false;

    // pool screening
    Minutes pool_started = 0.0;
    bool pool_caught = false;
    FailureDraw pool_draw;
};

struct VcState {
    VirtualClusterSpec spec;
    std::deque<int> queue;    // job indices, front = head
    int last_eval_usage = 0;  // usage at the last ledger refresh
};

class Simulation {
public:
    explicit Simulation(const SimInputs& in)
        : in_(in), alloc_(in.topo), failures_(in.failure_profile, in.failure_config, in.seed) {}

    RunResult run();

private:
    void init();
    void dispatch(const SimEvent& ev);

    void on_arrival(const SimEvent& ev);
    void on_pool_done(const SimEvent& ev);
    void on_timeout(const SimEvent& ev);
    void on_backoff_expired(const SimEvent& ev);
    void on_finish(const SimEvent& ev);
    void on_kill(const SimEvent& ev);
    void on_failure_fired(const SimEvent& ev);
    void on_preempt_check(const SimEvent& ev);
    void on_snapshot(const SimEvent& ev);
    void on_migration_check(const SimEvent& ev);

    void submit(int job, Minutes t);
    void enqueue(int job, Minutes t, bool at_head);
    void scheduling_pass(Minutes t);
    bool scan_once(Minutes t);
    void start_attempt(int job, Minutes t);
    void place(int job, std::vector<Slot> slots, Minutes t, bool was_head, std::size_t queue_pos);
    void start_execution(int job, Minutes t);
    LocalityConstraint constraint_for(int job, Minutes t) const;
    int effective_stage_at(int job, Minutes t) const;
    std::optional<FailureDraw> failure_draw_for_exec(int job, int exec);

    void end_segment(int job, Minutes t);
    double checkpointed_progress(const JobRuntime& rt, Minutes t) const;
    void finalize(int job, JobStatus status, Minutes t);
    void record_hold_end(int job, Minutes t);

    void open_wait_interval(int job, Minutes t);
    void close_wait_interval(int job, Minutes t);
    void refresh_wait_causes(Minutes t);

    void pool_admit(int job, Minutes t);
    void pool_start(int job, Minutes t);
    void emit_utilization(int job);

    bool any_job_live() const { return live_jobs_ > 0; }

    const SimInputs& in_;
    EventQueue events_;
    AllocationState alloc_;
    FailureModel failures_;
    std::vector<JobRuntime> rt_;
    std::map<std::string, VcState> vcs_;
    RunResult result_;

    int live_jobs_ = 0;
    bool eligibility_dirty_ = false;
    uint64_t last_scan_version_ = ~0ULL;

    int pool_free_ = 0;
    std::deque<int> pool_queue_;
};

void Simulation::init() {
    const std::size_t n = in_.jobs.size();
    rt_.resize(n);
    result_.outcomes.resize(n);

    int quota_sum = 0;
    for (const VirtualClusterSpec& spec : in_.vcs) {
        if (spec.quota < 0) throw ConfigError("vc " + spec.vc_id + " has negative quota");
        if (vcs_.count(spec.vc_id)) throw ConfigError("duplicate vc id " + spec.vc_id);
        vcs_[spec.vc_id].spec = spec;
        quota_sum += spec.quota;
    }
    if (quota_sum > in_.topo.total_gpus) {
        throw ConfigError("vc quotas sum to " + std::to_string(quota_sum) + " > " +
                          std::to_string(in_.topo.total_gpus) + " cluster GPUs");
    }

    pool_free_ = in_.sched.prerun_pool ? in_.sched.pool_gpus : 0;

    live_jobs_ = static_cast<int>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Job& job = in_.jobs[i];
        if (!vcs_.count(job.vc_id)) {
            throw UnknownVC(job.vc_id + " (job " + job.job_id + ")");
        }
        JobOutcome& out = result_.outcomes[i];
        out.job_id = job.job_id;
        out.vc_id = job.vc_id;
        out.user_id = job.user_id;
        out.gpu_demand = job.gpu_demand;
        out.bucket = bucket_of(job.gpu_demand);
        out.submit_time = job.submit_time;
        out.work = job.work;
        out.has_loss_curve = !job.loss_curve.empty();
        rt_[i].remaining_per_gpu = job.work / job.gpu_demand;

        const int h = static_cast<int>(i);
        events_.schedule({job.submit_time, 0, EventKind::JobArrival, h, kArgSubmit, 0});
        const bool kill_applies =
            job.kill_time && (!in_.replay || job.status_target == JobStatus::Killed);
        if (kill_applies) {
            rt_[i].kill_scheduled = true;
            events_.schedule({std::max(job.submit_time, *job.kill_time), 0, EventKind::JobFinish, h,
                              kArgKill, 0});
        }
    }

    if (in_.sched.preempt_check_interval_min > 0 && n > 0) {
        events_.schedule({in_.sched.preempt_check_interval_min, 0, EventKind::PreemptCheck, -1, 0, 0});
    }
    if (in_.snapshot_interval_min > 0 && n > 0) {
        events_.schedule({in_.snapshot_interval_min, 0, EventKind::UtilizationSample, -1, 0, 0});
    }
    if (in_.sched.migration && in_.sched.migration_interval_min > 0 && n > 0) {
        events_.schedule({in_.sched.migration_interval_min, 0, EventKind::MigrationCheck, -1, 0, 0});
    }
}

RunResult Simulation::run() {
    init();
    while (!events_.empty()) {
        if (events_.popped_count() > in_.event_cap) {
            throw LivelockGuard(std::to_string(in_.event_cap) + " events exceeded");
        }
        const Minutes t = events_.peek_time();
        // Drain every event at this timestamp before scheduling decisions, so
        // same-time arrivals/releases see one consistent state.
        while (!events_.empty() && events_.peek_time() == t) {
            dispatch(events_.pop());
            ++result_.events_processed;
        }
        scheduling_pass(t);
        refresh_wait_causes(t);
    }
    for (std::size_t i = 0; i < rt_.size(); ++i) {
        if (rt_[i].status == JobStatus::Pending) {
            throw LivelockGuard("job " + in_.jobs[i].job_id + " never reached a terminal status");
        }
    }
    result_.end_time = events_.now();
    return std::move(result_);
}

void Simulation::dispatch(const SimEvent& ev) {
    switch (ev.kind) {
        case EventKind::JobArrival:
            ev.arg == kArgPoolDone ? on_pool_done(ev) : on_arrival(ev);
            return;
        case EventKind::SchedAttempt:
            if (ev.arg == kArgResubmit) {
                if (rt_[ev.job].status == JobStatus::Pending &&
                    rt_[ev.job].phase == JobPhase::RetryBackoff) {
                    enqueue(ev.job, ev.time, false);
                }
            } else {
                eligibility_dirty_ = true;
            }
            return;
        case EventKind::AcquisitionTimeout: on_timeout(ev); return;
        case EventKind::BackoffExpired: on_backoff_expired(ev); return;
        case EventKind::JobFinish:
            ev.arg == kArgKill ? on_kill(ev) : on_finish(ev);
            return;
        case EventKind::FailureFired: on_failure_fired(ev); return;
        case EventKind::PreemptCheck: on_preempt_check(ev); return;
        case EventKind::UtilizationSample: on_snapshot(ev); return;
        case EventKind::MigrationCheck: on_migration_check(ev); return;
    }
}

// --- lifecycle ----------------------------------------------------------------

void Simulation::on_arrival(const SimEvent& ev) {
    const int job = ev.job;
    if (rt_[job].status != JobStatus::Pending) return; // killed at submit time
    if (in_.jobs[job].gpu_demand > in_.topo.total_gpus) {
        log::warn("job " + in_.jobs[job].job_id + " demands more GPUs than the cluster has; rejected");
        finalize(job, JobStatus::Unsuccessful, ev.time);
        return;
    }
    if (in_.sched.prerun_pool) {
        pool_admit(job, ev.time);
    } else {
        submit(job, ev.time);
    }
}

void Simulation::submit(int job, Minutes t) {
    auto it = vcs_.find(in_.jobs[job].vc_id);
    if (it == vcs_.end()) {
        throw UnknownVC(in_.jobs[job].vc_id);
    }
    JobOutcome& out = result_.outcomes[job];
    // Host-resource bookkeeping, proportional to the requested GPU count.
    out.reserved_cores = proportional_cores(in_.jobs[job].gpu_demand, in_.topo.max_gpus_per_server,
                                            in_.topo.server_cores.empty() ? 0 : in_.topo.server_cores[0]);
    enqueue(job, t, false);
    events_.schedule({t, 0, EventKind::SchedAttempt, job, 0, 0});
}

void Simulation::enqueue(int job, Minutes t, bool at_head) {
    JobRuntime& rt = rt_[job];
    rt.phase = JobPhase::Queued;
    rt.enqueue_time = t;
    if (rt.first_enqueue < 0.0) rt.first_enqueue = t;
    rt.retry_count = 0;
    rt.in_backoff = false;
    rt.attempt_active = false;
    rt.hold_started = -1.0;
    rt.last_try_version = ~0ULL;
    auto& queue = vcs_.at(in_.jobs[job].vc_id).queue;
    if (at_head) {
        queue.push_front(job);
    } else {
        queue.push_back(job);
    }
    // The ledger tiles the initial wait only (enqueue to first start).
    if (result_.outcomes[job].first_start < 0.0) {
        open_wait_interval(job, t);
    }
    eligibility_dirty_ = true;
}

void Simulation::pool_admit(int job, Minutes t) {
    rt_[job].phase = JobPhase::PoolScreening;
    if (pool_free_ > 0) {
        pool_start(job, t);
    } else {
        pool_queue_.push_back(job);
    }
}

void Simulation::pool_start(int job, Minutes t) {
    --pool_free_;
    JobRuntime& rt = rt_[job];
    rt.pool_started = t;
    rt.exec_seq = 1; // the screening run consumes execution draw 0
    auto draw = failure_draw_for_exec(job, 0);
    rt.pool_caught = draw.has_value() && failure_is_deterministic_user(draw->reason);
    Minutes duration = in_.sched.pool_window_min;
    if (rt.pool_caught) {
        rt.pool_draw = *draw;
        duration = std::min(draw->rtf_minutes, in_.sched.pool_window_min);
        duration = std::max(duration, 0.01);
    }
    events_.schedule({t + duration, 0, EventKind::JobArrival, job, kArgPoolDone, 0});
}

void Simulation::on_pool_done(const SimEvent& ev) {
    const int job = ev.job;
    ++pool_free_;
    while (!pool_queue_.empty()) {
        const int next = pool_queue_.front();
        pool_queue_.pop_front();
        if (rt_[next].status == JobStatus::Pending) {
            pool_start(next, ev.time);
            break;
        }
    }
    JobRuntime& rt = rt_[job];
    if (rt.status != JobStatus::Pending) return; // killed while screening
    result_.outcomes[job].pool_time += ev.time - rt.pool_started;
    if (rt.pool_caught) {
        FailureRecord rec;
        rec.job_id = in_.jobs[job].job_id;
        rec.user_id = in_.jobs[job].user_id;
        rec.attempt_index = 0;
        rec.reason = rt.pool_draw.reason;
        rec.rtf_minutes = ev.time - rt.pool_started;
        rec.gpu_demand = in_.jobs[job].gpu_demand;
        rec.time = ev.time;
        rec.on_cluster = false;
        result_.failure_records.push_back(std::move(rec));
        ++result_.outcomes[job].failures;
        finalize(job, JobStatus::Unsuccessful, ev.time);
        return;
    }
    submit(job, ev.time);
}

void Simulation::on_timeout(const SimEvent& ev) {
    JobRuntime& rt = rt_[ev.job];
    if (ev.generation != rt.attempt_gen || !rt.attempt_active) return; // stale
    if (rt.phase != JobPhase::Queued) return;
    record_hold_end(ev.job, ev.time);
    alloc_.release_holds(ev.job);
    rt.attempt_active = false;
    ++rt.retry_count;
    rt.in_backoff = true;
    ++rt.attempt_gen;
    events_.schedule({ev.time + in_.sched.backoff_min, 0, EventKind::BackoffExpired, ev.job, 0,
                      rt.attempt_gen});
}

void Simulation::on_backoff_expired(const SimEvent& ev) {
    JobRuntime& rt = rt_[ev.job];
    if (ev.generation != rt.attempt_gen) return;
    if (rt.phase != JobPhase::Queued || rt.status != JobStatus::Pending) return;
    rt.in_backoff = false;
    rt.last_try_version = ~0ULL;
    eligibility_dirty_ = true;
}

void Simulation::on_finish(const SimEvent& ev) {
    JobRuntime& rt = rt_[ev.job];
    if (ev.generation != rt.run_gen || rt.phase != JobPhase::Running) return;
    end_segment(ev.job, ev.time);
    rt.remaining_per_gpu = 0.0;
    alloc_.release(ev.job);
    finalize(ev.job, JobStatus::Passed, ev.time);
}

void Simulation::on_kill(const SimEvent& ev) {
    const int job = ev.job;
    JobRuntime& rt = rt_[job];
    if (rt.status != JobStatus::Pending) return;
    switch (rt.phase) {
        case JobPhase::Running:
            end_segment(job, ev.time);
            alloc_.release(job);
            break;
        case JobPhase::Queued: {
            record_hold_end(job, ev.time);
            alloc_.release_holds(job);
            close_wait_interval(job, ev.time);
            result_.outcomes[job].total_wait += ev.time - rt.enqueue_time;
            auto& queue = vcs_.at(in_.jobs[job].vc_id).queue;
            std::erase(queue, job);
            ++rt.attempt_gen; // invalidate pending timeout/backoff
            break;
        }
        case JobPhase::NotArrived:
        case JobPhase::PoolScreening:
        case JobPhase::RetryBackoff:
            break;
        case JobPhase::Done:
            return;
    }
    finalize(job, JobStatus::Killed, ev.time);
}

void Simulation::on_failure_fired(const SimEvent& ev) {
    const int job = ev.job;
    JobRuntime& rt = rt_[job];
    if (ev.generation != rt.run_gen || rt.phase != JobPhase::Running) return;
    const FailureReason reason = rt.pending_failure ? rt.pending_failure->reason
                                                    : FailureReason::NoSignature;
    const double elapsed = ev.time - rt.seg_start;
    end_segment(job, ev.time);

    FailureRecord rec;
    rec.job_id = in_.jobs[job].job_id;
    rec.user_id = in_.jobs[job].user_id;
    rec.attempt_index = rt.attempt_index;
    rec.reason = reason;
    rec.rtf_minutes = elapsed;
    rec.gpu_demand = in_.jobs[job].gpu_demand;
    rec.time = ev.time;
    result_.failure_records.push_back(rec);
    ++result_.outcomes[job].failures;

    // Progress since the last checkpoint is lost.
    rt.remaining_per_gpu = std::max(0.0, rt.remaining_per_gpu - checkpointed_progress(rt, ev.time));
    alloc_.release(job);

    const RetryDecision decision = apply_retry_policy(in_.jobs[job], reason, rt.attempt_index,
                                                      in_.sched.retry_policy, in_.sched.backoff_min);
    ++rt.attempt_index;
    rt.prior_failure = reason;
    if (decision.retry) {
        rt.phase = JobPhase::RetryBackoff;
        events_.schedule({ev.time + decision.backoff, 0, EventKind::SchedAttempt, job, kArgResubmit, 0});
    } else {
        finalize(job, JobStatus::Unsuccessful, ev.time);
    }
}

void Simulation::on_preempt_check(const SimEvent& ev) {
    if (any_job_live() && in_.sched.preempt_check_interval_min > 0) {
        events_.schedule({ev.time + in_.sched.preempt_check_interval_min, 0, EventKind::PreemptCheck,
                          -1, 0, 0});
    }
    eligibility_dirty_ = true; // periodic scheduling tick: waiting jobs may have relaxed
    if (!alloc_.reconcile()) {
        ++result_.reconcile_violations;
    }
    std::map<std::string, int> head_demand;
    for (const auto& [vc_id, vc] : vcs_) {
        if (!vc.queue.empty()) {
            head_demand[vc_id] = in_.jobs[vc.queue.front()].gpu_demand;
        }
    }
    if (head_demand.empty()) return;
    std::map<std::string, VirtualClusterSpec> specs;
    for (const auto& [vc_id, vc] : vcs_) specs[vc_id] = vc.spec;
    std::vector<RunningJobInfo> running;
    for (std::size_t i = 0; i < rt_.size(); ++i) {
        if (rt_[i].phase == JobPhase::Running) {
            running.push_back({static_cast<JobHandle>(i), in_.jobs[i].vc_id, in_.jobs[i].gpu_demand,
                               rt_[i].seg_start});
        }
    }
    const auto actions = plan_preemption(alloc_, specs, head_demand, running,
                                         in_.sched.preempt_threshold);
    for (const PreemptAction& action : actions) {
        const int job = action.victim;
        JobRuntime& rt = rt_[job];
        const double elapsed = ev.time - rt.seg_start;
        end_segment(job, ev.time);

        FailureRecord rec;
        rec.job_id = in_.jobs[job].job_id;
        rec.user_id = in_.jobs[job].user_id;
        rec.attempt_index = rt.attempt_index;
        rec.reason = FailureReason::JobPreempted;
        rec.rtf_minutes = elapsed;
        rec.gpu_demand = in_.jobs[job].gpu_demand;
        rec.time = ev.time;
        result_.failure_records.push_back(rec);
        ++result_.outcomes[job].preemptions;
        ++result_.outcomes[job].failures;

        rt.remaining_per_gpu = std::max(0.0, rt.remaining_per_gpu - checkpointed_progress(rt, ev.time));
        alloc_.release(job);
        ++rt.run_gen; // cancel finish/failure events
        enqueue(job, ev.time, true);
    }
}

void Simulation::on_snapshot(const SimEvent& ev) {
    if (any_job_live() && in_.snapshot_interval_min > 0) {
        events_.schedule({ev.time + in_.snapshot_interval_min, 0, EventKind::UtilizationSample, -1, 0, 0});
    }
    ClusterSnapshot snap;
    snap.time = ev.time;
    snap.allocated_fraction =
        alloc_.total_gpus() > 0 ? static_cast<double>(alloc_.total_allocated()) / alloc_.total_gpus() : 0.0;
    snap.empty_server_fraction = fragmentation_report(alloc_, in_.topo).empty_server_fraction;
    result_.snapshots.push_back(snap);
}

void Simulation::on_migration_check(const SimEvent& ev) {
    if (any_job_live() && in_.sched.migration_interval_min > 0) {
        events_.schedule({ev.time + in_.sched.migration_interval_min, 0, EventKind::MigrationCheck,
                          -1, 0, 0});
    }
    for (std::size_t i = 0; i < rt_.size(); ++i) {
        JobRuntime& rt = rt_[i];
        if (rt.phase != JobPhase::Running || rt.pclass.servers_used <= 1) continue;
        const int job = static_cast<int>(i);
        const std::vector<Slot> old_slots = alloc_.slots_of(job);
        // Seek a strictly smaller footprint with the job's own slots freed.
        const double progressed = std::max(0.0, (ev.time - rt.seg_start - rt.seg_dead)) / rt.slowdown;
        alloc_.release(job);
        LocalityConstraint tighter;
        tighter.max_servers = rt.pclass.servers_used - 1;
        tighter.require_single_rdma_domain = false;
        AcquirePlan plan = plan_acquisition(in_.jobs[job].gpu_demand, tighter, alloc_, in_.topo, {},
                                            in_.sched.dedicated_servers);
        if (!plan.complete) {
            alloc_.allocate(job, in_.jobs[job].vc_id, old_slots); // exact restore
            continue;
        }
        // Migrate: close the old segment, pay the checkpoint cost, resume.
        Segment seg{rt.seg_start, ev.time, rt.pclass};
        rt.segments.push_back(seg);
        result_.outcomes[job].gpu_time += (ev.time - rt.seg_start) * in_.jobs[job].gpu_demand;
        rt.remaining_per_gpu = std::max(0.0, rt.remaining_per_gpu - progressed);
        alloc_.allocate(job, in_.jobs[job].vc_id, plan.take);
        ++result_.outcomes[job].migrations;
        ++rt.run_gen;
        rt.seg_dead = in_.sched.migration_cost_min;
        start_execution(job, ev.time);
    }
}

// --- scheduling ---------------------------------------------------------------

LocalityConstraint Simulation::constraint_for(int job, Minutes t) const {
    const LocalityConstraint base = initial_constraint(in_.jobs[job].gpu_demand, in_.topo);
    return relax(base, effective_stage_at(job, t), in_.topo);
}

// Relaxation paces with waiting time: one retry cycle is an acquisition
// timeout plus its backoff, and every relax_after cycles weaken the
// constraint one stage — the same ladder the head's event-driven retries
// climb. Jobs waiting behind the queue head relax on the same clock.
int Simulation::effective_stage_at(int job, Minutes t) const {
    const double cycle = in_.sched.acquisition_timeout_min + in_.sched.backoff_min;
    if (cycle <= 0.0) return 0;
    double waited = t - rt_[job].enqueue_time;
    if (in_.sched.wait_for_locality) {
        waited -= in_.sched.extra_wait_min;
    }
    if (waited < 0.0) waited = 0.0;
    const int retries_equivalent = static_cast<int>(waited / cycle);
    return relax_stage(retries_equivalent, in_.sched.relax_after);
}

void Simulation::start_attempt(int job, Minutes t) {
    JobRuntime& rt = rt_[job];
    rt.attempt_active = true;
    rt.hold_started = -1.0;
    ++rt.attempt_gen;
    events_.schedule({t + in_.sched.acquisition_timeout_min, 0, EventKind::AcquisitionTimeout, job, 0,
                      rt.attempt_gen});
}

void Simulation::scheduling_pass(Minutes t) {
    for (;;) {
        if (!eligibility_dirty_ && alloc_.version() == last_scan_version_) break;
        eligibility_dirty_ = false;
        last_scan_version_ = alloc_.version();
        scan_once(t);
    }
}

bool Simulation::scan_once(Minutes t) {
    // Virtual clusters in fair order: most underserved (usage/quota) first.
    std::vector<std::pair<double, const std::string*>> order;
    order.reserve(vcs_.size());
    for (const auto& [vc_id, vc] : vcs_) {
        const double ratio = vc.spec.quota > 0
                                 ? static_cast<double>(alloc_.usage_of(vc_id)) / vc.spec.quota
                                 : 1e9;
        order.emplace_back(ratio, &vc_id);
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return *a.second < *b.second;
    });

    for (const auto& [ratio, vc_id] : order) {
        VcState& vc = vcs_.at(*vc_id);
        int free_total = alloc_.total_acquirable();
        for (std::size_t pos = 0; pos < vc.queue.size(); ++pos) {
            const int job = vc.queue[pos];
            JobRuntime& rt = rt_[job];
            const Job& spec = in_.jobs[job];
            // A job displaced from the head (preemption re-queues at the
            // front) keeps its pending attempt and holds until timeout.
            if (pos == 0 || rt.attempt_active) {
                if (rt.in_backoff) continue; // waits out its backoff; others may pass it
                if (pos == 0 && !rt.attempt_active) start_attempt(job, t);
                if (!rt.attempt_active) continue;
                if (rt.last_try_version == alloc_.version() &&
                    rt.last_try_stage == effective_stage_at(job, t)) continue;
                const std::vector<Slot> held = alloc_.holds_of(job);
                AcquirePlan plan = plan_acquisition(spec.gpu_demand, constraint_for(job, t), alloc_,
                                                    in_.topo, held, in_.sched.dedicated_servers);
                if (plan.complete) {
                    std::vector<Slot> slots = held;
                    slots.insert(slots.end(), plan.take.begin(), plan.take.end());
                    place(job, std::move(slots), t, pos == 0, pos);
                    return true;
                }
                if (!plan.take.empty()) {
                    for (const Slot& s : plan.take) alloc_.hold(job, s);
                    if (rt.hold_started < 0.0) rt.hold_started = t;
                }
                rt.last_try_version = alloc_.version();
                rt.last_try_stage = effective_stage_at(job, t);
            } else {
                // Out-of-order: a waiting job whose whole gang fits right now.
                if (spec.gpu_demand > free_total) continue;
                if (rt.last_try_version == alloc_.version() &&
                    rt.last_try_stage == effective_stage_at(job, t)) continue;
                AcquirePlan plan = plan_acquisition(spec.gpu_demand, constraint_for(job, t), alloc_,
                                                    in_.topo, {}, in_.sched.dedicated_servers);
                if (plan.complete) {
                    place(job, std::move(plan.take), t, false, pos);
                    return true;
                }
                rt.last_try_version = alloc_.version();
                rt.last_try_stage = effective_stage_at(job, t);
            }
            free_total = alloc_.total_acquirable();
            if (free_total == 0) break;
        }
    }
    return false;
}

void Simulation::place(int job, std::vector<Slot> slots, Minutes t, bool was_head,
                       std::size_t queue_pos) {
    JobRuntime& rt = rt_[job];
    JobOutcome& out = result_.outcomes[job];
    const Job& spec = in_.jobs[job];

    if (static_cast<int>(slots.size()) != spec.gpu_demand) {
        ++result_.gang_violations;
    }
    record_hold_end(job, t);
    rt.attempt_active = false;
    ++rt.attempt_gen; // cancels the pending acquisition timeout

    auto& queue = vcs_.at(spec.vc_id).queue;
    if (!was_head) {
        ++result_.ooo_placements;
        for (std::size_t i = 0; i < queue_pos && i < queue.size(); ++i) {
            result_.outcomes[queue[i]].bypassed_by_ooo = true;
        }
        if (in_.sched.ooo_harmless_analysis &&
            static_cast<int>(result_.ooo_decisions.size()) < in_.sched.ooo_harmless_max_decisions) {
            OooDecisionTrace trace;
            trace.time = t;
            trace.placed_job = job;
            for (std::size_t i = 0; i < queue_pos && i < queue.size(); ++i) {
                trace.waiting_jobs.push_back(queue[i]);
            }
            result_.ooo_decisions.push_back(std::move(trace));
        }
    }
    ++result_.placements;
    queue.erase(queue.begin() + static_cast<std::ptrdiff_t>(queue_pos));

    close_wait_interval(job, t);
    out.total_wait += t - rt.enqueue_time;
    const bool first = out.first_start < 0.0;
    if (first) {
        out.first_start = t;
        out.queueing_delay = t - rt.first_enqueue;
        out.ooo_placed = !was_head;
    }

    alloc_.allocate(job, spec.vc_id, slots);
    rt.seg_dead = 0.0;
    start_execution(job, t);

    // The recorded stage describes the first placement, the same event the
    // queueing delay measures.
    if (first) {
        const LocalityConstraint base = initial_constraint(spec.gpu_demand, in_.topo);
        out.placement_stage = placement_relax_stage(base, out.servers_used, out.racks_used, in_.topo);
        out.constraint_stage = effective_stage_at(job, t);
    }
}

void Simulation::start_execution(int job, Minutes t) {
    JobRuntime& rt = rt_[job];
    JobOutcome& out = result_.outcomes[job];
    const Job& spec = in_.jobs[job];
    const std::vector<Slot> slots = alloc_.slots_of(job);

    rt.phase = JobPhase::Running;
    ++rt.run_gen;
    rt.seg_start = t;
    rt.pclass = placement_class(slots, alloc_);
    rt.slowdown = slowdown_factor(rt.pclass, in_.calibration);

    out.servers_used = rt.pclass.servers_used;
    out.racks_used = racks_spanned(slots, in_.topo);
    out.colocated = rt.pclass.colocated;
    out.slowdown = rt.slowdown;
    ++out.executions;
    if (rt.pclass.colocated) ++result_.colocated_placements;

    const double compute_wall = rt.remaining_per_gpu * rt.slowdown;

    // A drawn failure always fires, capped at the execution's duration; on a
    // tie with completion the failure is dispatched first.
    rt.pending_failure.reset();
    auto draw = failure_draw_for_exec(job, rt.exec_seq);
    ++rt.exec_seq;
    if (draw) {
        const double rtf = std::min(draw->rtf_minutes, compute_wall);
        rt.pending_failure = FailureDraw{draw->reason, rtf};
        events_.schedule({t + rt.seg_dead + rtf, 0, EventKind::FailureFired, job, 0, rt.run_gen});
    }
    events_.schedule({t + rt.seg_dead + compute_wall, 0, EventKind::JobFinish, job, 0, rt.run_gen});

    // Replay of a killed job without an explicit kill time: stop partway
    // through the first execution.
    if (in_.replay && spec.status_target == JobStatus::Killed && !spec.kill_time &&
        !rt.kill_scheduled) {
        rt.kill_scheduled = true;
        events_.schedule({t + rt.seg_dead + 0.6 * compute_wall, 0, EventKind::JobFinish, job, kArgKill,
                          0});
    }
}

std::optional<FailureDraw> Simulation::failure_draw_for_exec(int job, int exec) {
    const Job& spec = in_.jobs[job];
    if (in_.replay && spec.status_target) {
        if (*spec.status_target == JobStatus::Unsuccessful) {
            return failures_.sample_forced_failure(spec, exec);
        }
        return std::nullopt; // passed/killed replays run clean
    }
    return failures_.sample_failure(spec, exec, rt_[job].prior_failure);
}

// --- bookkeeping ----------------------------------------------------------------

void Simulation::end_segment(int job, Minutes t) {
    JobRuntime& rt = rt_[job];
    result_.outcomes[job].gpu_time += (t - rt.seg_start) * in_.jobs[job].gpu_demand;
    rt.segments.push_back({rt.seg_start, t, rt.pclass});
}

double Simulation::checkpointed_progress(const JobRuntime& rt, Minutes t) const {
    const double compute_wall = std::max(0.0, t - rt.seg_start - rt.seg_dead);
    const double interval = in_.sched.checkpoint_interval_min;
    const double preserved_wall =
        interval > 0.0 ? std::floor(compute_wall / interval) * interval : compute_wall;
    return preserved_wall / rt.slowdown;
}

void Simulation::record_hold_end(int job, Minutes t) {
    JobRuntime& rt = rt_[job];
    if (rt.hold_started < 0.0) return;
    const double duration = t - rt.hold_started;
    result_.max_hold_minutes = std::max(result_.max_hold_minutes, duration);
    if (duration > in_.sched.acquisition_timeout_min + kHoldEps) {
        ++result_.hold_timeout_violations;
    }
    rt.hold_started = -1.0;
}

void Simulation::finalize(int job, JobStatus status, Minutes t) {
    JobRuntime& rt = rt_[job];
    rt.phase = JobPhase::Done;
    rt.status = status;
    JobOutcome& out = result_.outcomes[job];
    out.status = status;
    out.finish_time = t;
    if (out.first_start < 0.0) {
        // Never ran: the whole queued life counts as delay.
        out.queueing_delay = rt.first_enqueue >= 0.0 ? t - rt.first_enqueue : 0.0;
    }
    --live_jobs_;
    emit_utilization(job);
}

void Simulation::emit_utilization(int job) {
    JobRuntime& rt = rt_[job];
    const Job& spec = in_.jobs[job];
    const JobStatus status = rt.status;
    for (std::size_t seg_idx = 0; seg_idx < rt.segments.size(); ++seg_idx) {
        const Segment& seg = rt.segments[seg_idx];
        const int minutes = static_cast<int>(std::floor(seg.end - seg.start));
        if (minutes <= 0) continue;
        RngStream rng = RngStream::from_master(in_.seed, "util",
                                               static_cast<uint64_t>(job) * 1000003ULL + seg_idx);
        UtilizationHistogram& bucket_hist =
            result_.util_by_bucket[static_cast<int>(bucket_of(spec.gpu_demand))];
        UtilizationHistogram& status_hist = result_.util_by_status[job_status_name(status)];
        UtilizationHistogram* spread_hist = nullptr;
        if (spec.gpu_demand == 16 && seg.pclass.servers_used >= 2) {
            spread_hist = &result_.util_16gpu_by_spread[seg.pclass.servers_used];
        }
        for (int m = 0; m < minutes; ++m) {
            const double v = utilization_sample(spec.gpu_demand, seg.pclass, in_.calibration, rng);
            bucket_hist.add(v);
            status_hist.add(v);
            if (spread_hist != nullptr) spread_hist->add(v);
        }
    }
}

// --- delay attribution ------------------------------------------------------------

void Simulation::open_wait_interval(int job, Minutes t) {
    JobRuntime& rt = rt_[job];
    const VcState& vc = vcs_.at(in_.jobs[job].vc_id);
    rt.interval_open = true;
    rt.interval_start = t;
    rt.interval_cause = classify_delay_cause(alloc_.usage_of(vc.spec.vc_id), vc.spec.quota,
                                             in_.jobs[job].gpu_demand);
}

void Simulation::close_wait_interval(int job, Minutes t) {
    JobRuntime& rt = rt_[job];
    if (!rt.interval_open) return;
    if (t > rt.interval_start) {
        result_.outcomes[job].ledger.push_back({rt.interval_start, t, rt.interval_cause});
    }
    rt.interval_open = false;
}

void Simulation::refresh_wait_causes(Minutes t) {
    for (auto& [vc_id, vc] : vcs_) {
        const int usage = alloc_.usage_of(vc_id);
        if (usage == vc.last_eval_usage) continue;
        vc.last_eval_usage = usage;
        for (int job : vc.queue) {
            JobRuntime& rt = rt_[job];
            if (!rt.interval_open) continue;
            const DelayCause cause =
                classify_delay_cause(usage, vc.spec.quota, in_.jobs[job].gpu_demand);
            if (cause != rt.interval_cause) {
                if (t > rt.interval_start) {
                    result_.outcomes[job].ledger.push_back({rt.interval_start, t, rt.interval_cause});
                }
                rt.interval_start = t;
                rt.interval_cause = cause;
            }
        }
    }
}

} // namespace

RunResult run_simulation(const SimInputs& inputs) {
    Simulation sim(inputs);
    return sim.run();
}

} // namespace gpusim
