#include "gpusim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "gpusim/errors.hpp"

namespace gpusim {

using nlohmann::json;

const char* job_status_name(JobStatus s) {
    switch (s) {
        case JobStatus::Pending:      return "pending";
        case JobStatus::Passed:       return "passed";
        case JobStatus::Killed:       return "killed";
        case JobStatus::Unsuccessful: return "unsuccessful";
    }
    return "?";
}

std::optional<JobStatus> job_status_from(const std::string& s) {
    if (s == "passed") return JobStatus::Passed;
    if (s == "killed") return JobStatus::Killed;
    if (s == "unsuccessful") return JobStatus::Unsuccessful;
    return std::nullopt;
}

const char* gpu_bucket_name(GpuBucket b) {
    switch (b) {
        case GpuBucket::B1:    return "1";
        case GpuBucket::B2_4:  return "2-4";
        case GpuBucket::B5_8:  return "5-8";
        case GpuBucket::B_GT8: return ">8";
    }
    return "?";
}

GpuBucket bucket_of(int gpu_demand) {
    if (gpu_demand <= 1) return GpuBucket::B1;
    if (gpu_demand <= 4) return GpuBucket::B2_4;
    if (gpu_demand <= 8) return GpuBucket::B5_8;
    return GpuBucket::B_GT8;
}

namespace {

// Pulls a required field, recording a schema issue naming it when absent or mistyped.
template <typename T>
bool require(const json& rec, const char* key, int line, std::vector<TraceIssue>& issues, T& out) {
    auto it = rec.find(key);
    if (it == rec.end()) {
        issues.push_back({line, true, std::string("missing required field '") + key + "'"});
        return false;
    }
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        issues.push_back({line, true, std::string("field '") + key + "' has wrong type"});
        return false;
    }
    return true;
}

bool parse_record(const json& rec, int line, std::vector<TraceIssue>& issues, Job& job) {
    if (!rec.is_object()) {
        issues.push_back({line, true, "record is not a JSON object"});
        return false;
    }
    if (!require(rec, "job_id", line, issues, job.job_id)) return false;
    if (!require(rec, "vc", line, issues, job.vc_id)) return false;
    if (!require(rec, "submit_time", line, issues, job.submit_time)) return false;
    if (!require(rec, "gpu_demand", line, issues, job.gpu_demand)) return false;
    if (!require(rec, "work", line, issues, job.work)) return false;
    if (job.gpu_demand < 1) {
        issues.push_back({line, true, "gpu_demand must be >= 1"});
        return false;
    }
    if (!(job.work > 0.0)) {
        issues.push_back({line, true, "work must be > 0"});
        return false;
    }
    if (job.submit_time < 0.0) {
        issues.push_back({line, true, "submit_time must be >= 0"});
        return false;
    }
    if (auto it = rec.find("user"); it != rec.end() && it->is_string()) {
        job.user_id = it->get<std::string>();
    }
    if (auto it = rec.find("status"); it != rec.end()) {
        if (!it->is_string()) {
            issues.push_back({line, true, "field 'status' has wrong type"});
            return false;
        }
        auto st = job_status_from(it->get<std::string>());
        if (!st) {
            issues.push_back({line, true, "unknown status '" + it->get<std::string>() + "'"});
            return false;
        }
        job.status_target = st;
    }
    if (auto it = rec.find("kill_time"); it != rec.end() && it->is_number()) {
        job.kill_time = it->get<double>();
    }
    if (auto it = rec.find("loss_curve"); it != rec.end()) {
        if (!it->is_array()) {
            issues.push_back({line, true, "field 'loss_curve' has wrong type"});
            return false;
        }
        for (const auto& v : *it) {
            if (!v.is_number() || !std::isfinite(v.get<double>())) {
                issues.push_back({line, true, "loss_curve values must be finite numbers"});
                return false;
            }
            job.loss_curve.push_back(v.get<double>());
        }
    }
    if (auto it = rec.find("max_retries"); it != rec.end() && it->is_number_integer()) {
        job.max_retries = it->get<int>();
    }
    return true;
}

} // namespace

TraceParseResult parse_trace(std::istream& stream) {
    TraceParseResult result;
    std::string line;
    int lineno = 0;
    Minutes prev_submit = -1.0;
    bool out_of_order = false;
    while (std::getline(stream, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded()) {
            result.issues.push_back({lineno, true, "invalid JSON"});
            continue;
        }
        Job job;
        if (!parse_record(rec, lineno, result.issues, job)) {
            continue;
        }
        if (job.submit_time < prev_submit) {
            out_of_order = true;
        }
        prev_submit = job.submit_time;
        result.jobs.push_back(std::move(job));
    }
    if (out_of_order) {
        result.issues.push_back({0, false, "submit times not monotonic; records re-sorted"});
        std::stable_sort(result.jobs.begin(), result.jobs.end(),
                         [](const Job& a, const Job& b) { return a.submit_time < b.submit_time; });
    }
    return result;
}

std::vector<Job> parse_trace_strict(std::istream& stream) {
    TraceParseResult result = parse_trace(stream);
    std::string errors;
    for (const TraceIssue& issue : result.issues) {
        if (issue.fatal) {
            if (!errors.empty()) errors += "; ";
            errors += "line " + std::to_string(issue.line) + ": " + issue.message;
        }
    }
    if (!errors.empty()) {
        throw SchemaError(errors);
    }
    return std::move(result.jobs);
}

void serialize_trace(const std::vector<Job>& jobs, std::ostream& out) {
    for (const Job& job : jobs) {
        json rec;
        rec["job_id"] = job.job_id;
        rec["vc"] = job.vc_id;
        rec["submit_time"] = job.submit_time;
        rec["gpu_demand"] = job.gpu_demand;
        rec["work"] = job.work;
        if (!job.user_id.empty()) rec["user"] = job.user_id;
        if (job.status_target) rec["status"] = job_status_name(*job.status_target);
        if (job.kill_time) rec["kill_time"] = *job.kill_time;
        if (!job.loss_curve.empty()) rec["loss_curve"] = job.loss_curve;
        rec["max_retries"] = job.max_retries;
        out << rec.dump() << "\n";
    }
}

namespace {

void validate_params(const WorkloadParams& params) {
    if (params.job_count < 0) throw InvalidDistribution("job_count < 0");
    if (params.buckets.size() != static_cast<std::size_t>(kGpuBucketCount)) {
        throw InvalidDistribution("expected one BucketParams per GPU bucket");
    }
    double share_sum = 0.0;
    for (const BucketParams& b : params.buckets) {
        if (b.share < 0.0) throw InvalidDistribution("negative bucket share");
        share_sum += b.share;
        double w = 0.0;
        for (const auto& [demand, weight] : b.demand_weights) {
            if (weight < 0.0) throw InvalidDistribution("negative demand weight");
            if (demand < 1) throw InvalidDistribution("demand < 1 in bucket weights");
            w += weight;
        }
        if (b.share > 0.0 && w <= 0.0) {
            throw InvalidDistribution("bucket with positive share has no demand weights");
        }
    }
    if (std::abs(share_sum - 1.0) > 1e-9) {
        throw InvalidDistribution("bucket shares sum to " + std::to_string(share_sum));
    }
    double vc_sum = 0.0;
    for (const auto& [vc, w] : params.vc_arrival_weights) {
        if (w < 0.0) throw InvalidDistribution("negative VC arrival weight");
        vc_sum += w;
    }
    if (params.vc_arrival_weights.empty() || vc_sum <= 0.0) {
        throw InvalidDistribution("no VC arrival weights");
    }
    if (params.tail.probability < 0.0 || params.tail.probability > 1.0) {
        throw InvalidDistribution("tail probability out of [0,1]");
    }
    if (params.killed_fraction < 0.0 || params.killed_fraction > 1.0) {
        throw InvalidDistribution("killed_fraction out of [0,1]");
    }
}

std::vector<double> make_loss_curve(const LossCurveParams& p, int epochs, RngStream& rng) {
    // Exponential decay to an asymptote, mild multiplicative noise. The
    // plateau point (epoch fraction at which the curve is within ~0.05% of
    // the asymptote) is drawn from an early/late mixture.
    double plateau;
    if (rng.uniform() < p.plateau_early_share) {
        plateau = rng.uniform(p.plateau_early_lo, p.plateau_early_hi);
    } else {
        plateau = rng.uniform(p.plateau_late_lo, p.plateau_late_hi);
    }
    const double target = 5e-4; // residual amplitude at the plateau point
    const double rate = std::log(p.amplitude / target) / std::max(plateau, 1e-3);
    const double asymptote = rng.uniform(0.1, 2.0);
    std::vector<double> curve(epochs);
    for (int e = 0; e < epochs; ++e) {
        const double x = static_cast<double>(e + 1) / epochs;
        double v = asymptote * (1.0 + p.amplitude * std::exp(-rate * x));
        if (p.noise_sigma > 0.0) {
            v *= 1.0 + p.noise_sigma * rng.normal();
        }
        curve[e] = v;
    }
    return curve;
}

} // namespace

std::vector<Job> generate_workload(const WorkloadParams& params, uint64_t seed) {
    validate_params(params);

    std::vector<std::string> vcs;
    std::vector<double> vc_weights;
    for (const auto& [vc, w] : params.vc_arrival_weights) {
        vcs.push_back(vc);
        vc_weights.push_back(w);
    }
    std::vector<double> bucket_shares;
    for (const BucketParams& b : params.buckets) bucket_shares.push_back(b.share);

    // Mean GPU-minutes per job, used to spread arrivals so that offered load
    // approximates params.arrival_load on params.total_gpus.
    double mean_gpu_minutes = 0.0;
    for (const BucketParams& b : params.buckets) {
        if (b.share <= 0.0) continue;
        double wsum = 0.0;
        double dmean = 0.0;
        for (const auto& [demand, weight] : b.demand_weights) {
            wsum += weight;
            dmean += demand * weight;
        }
        dmean /= wsum;
        double body_mean = b.runtime_median * std::exp(params.runtime_sigma * params.runtime_sigma / 2.0);
        body_mean = std::min(body_mean, params.max_duration_min);
        double tail_mean = 0.0;
        if (params.tail.probability > 0.0 && params.tail.pareto_alpha > 1.0) {
            // Mean of the Pareto tail truncated at the duration cap.
            const double xm = params.tail.pareto_xm;
            const double alpha = params.tail.pareto_alpha;
            const double cap = std::max(params.max_duration_min, xm);
            tail_mean = xm + xm / (alpha - 1.0) * (1.0 - std::pow(xm / cap, alpha - 1.0));
        }
        double dur = (1.0 - params.tail.probability) * body_mean + params.tail.probability * tail_mean;
        mean_gpu_minutes += b.share * dmean * dur;
    }
    double arrival_rate = 0.0; // jobs per minute
    if (params.total_gpus > 0 && params.arrival_load > 0.0 && mean_gpu_minutes > 0.0) {
        arrival_rate = params.arrival_load * params.total_gpus / mean_gpu_minutes;
    }

    RngStream arrivals = RngStream::from_master(seed, "workload/arrivals");
    std::vector<Job> jobs;
    jobs.reserve(params.job_count);
    Minutes clock = 0.0;
    for (int i = 0; i < params.job_count; ++i) {
        RngStream rng = RngStream::from_master(seed, "workload/job", static_cast<uint64_t>(i));
        Job job;
        job.job_id = "job" + std::to_string(i);
        if (arrival_rate > 0.0) {
            clock += arrivals.exponential(1.0 / arrival_rate);
        }
        job.submit_time = clock;
        job.user_id = "user" + std::to_string(rng.uniform_index(static_cast<uint64_t>(params.user_count)));
        job.max_retries = params.max_retries;

        const std::size_t bucket_idx = rng.weighted_index(bucket_shares);
        const BucketParams& bucket = params.buckets[bucket_idx];
        if (bucket.vc_weights.empty()) {
            job.vc_id = vcs[rng.weighted_index(vc_weights)];
        } else {
            std::vector<std::string> bucket_vcs;
            std::vector<double> bucket_vc_weights;
            for (const auto& [vc, weight] : bucket.vc_weights) {
                bucket_vcs.push_back(vc);
                bucket_vc_weights.push_back(weight);
            }
            job.vc_id = bucket_vcs[rng.weighted_index(bucket_vc_weights)];
        }
        std::vector<int> demands;
        std::vector<double> demand_weights;
        for (const auto& [demand, weight] : bucket.demand_weights) {
            demands.push_back(demand);
            demand_weights.push_back(weight);
        }
        job.gpu_demand = demands[rng.weighted_index(demand_weights)];

        double duration; // ideal wall minutes
        if (rng.uniform() < params.tail.probability) {
            double u = rng.uniform();
            duration = params.tail.pareto_xm * std::pow(1.0 - u, -1.0 / params.tail.pareto_alpha);
        } else {
            duration = bucket.runtime_median * std::exp(params.runtime_sigma * rng.normal());
        }
        duration = std::clamp(duration, 0.5, params.max_duration_min);
        job.work = duration * job.gpu_demand;

        // Kills skew toward big jobs: users mostly abandon long/large runs.
        double kill_prob = params.killed_fraction;
        if (mean_gpu_minutes > 0.0) {
            kill_prob = std::min(0.92, params.killed_fraction *
                                           std::pow(job.work / mean_gpu_minutes, 1.0));
        }
        if (rng.uniform() < kill_prob) {
            job.kill_time = job.submit_time + duration * rng.uniform(0.35, 1.05) + rng.uniform(0.0, 30.0);
        }

        if (params.loss_curve.enabled) {
            RngStream curve_rng = RngStream::from_master(seed, "workload/curve", static_cast<uint64_t>(i));
            const LossCurveParams& cp = params.loss_curve;
            int epochs = cp.epochs_min +
                         static_cast<int>(curve_rng.uniform_index(
                             static_cast<uint64_t>(cp.epochs_max - cp.epochs_min + 1)));
            job.loss_curve = make_loss_curve(cp, epochs, curve_rng);
        }

        jobs.push_back(std::move(job));
    }
    std::stable_sort(jobs.begin(), jobs.end(),
                     [](const Job& a, const Job& b) { return a.submit_time < b.submit_time; });
    return jobs;
}

} // namespace gpusim
