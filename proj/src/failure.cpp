#include "gpusim/failure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "gpusim/errors.hpp"

namespace gpusim {

using nlohmann::json;

namespace {

struct ReasonMeta {
    FailureReason reason;
    const char* name;
    uint8_t categories; // bit 0 IF, bit 1 AE, bit 2 U
};

constexpr uint8_t IF = 1, AE = 2, U = 4;

// Category marks per reason, mirroring the failure table.
constexpr ReasonMeta kReasonMeta[kFailureReasonCount] = {
    {FailureReason::CpuOutOfMemory,      "CPU out of memory",    AE | U},
    {FailureReason::IncorrectInputs,     "Incorrect inputs",     IF | U},
    {FailureReason::SemanticError,       "Semantic error",       IF | U},
    {FailureReason::CoreDump,            "Core dump",            AE | U},
    {FailureReason::InvalidMemAccess,    "Invalid mem access",   U},
    {FailureReason::ModelCkptError,      "Model ckpt error",     IF},
    {FailureReason::CudaFailure,         "CUDA failure",         AE},
    {FailureReason::SyntaxError,         "Syntax error",         IF | U},
    {FailureReason::TracebackFromCrash,  "Traceback from crash", IF | AE | U},
    {FailureReason::MpiError,            "MPI error",            IF},
    {FailureReason::GpuOutOfMemory,      "GPU out of memory",    AE},
    {FailureReason::MpiRuntimeFailure,   "MPI runtime failure",  IF},
    {FailureReason::PermissionError,     "Permission error",     U},
    {FailureReason::ImportError,         "Import error",         IF | U},
    {FailureReason::JobPreempted,        "Job preempted",        IF},
    {FailureReason::CudaInitFailed,      "CUDA init failed",     AE},
    {FailureReason::ModelDiverged,       "Model diverged",       U},
    {FailureReason::CudaVersionMismatch, "CUDA ver. mismatch",   AE},
    {FailureReason::GpuEccError,         "GPU ECC error",        AE},
    {FailureReason::OutputNodeError,     "Output node error",    U},
    {FailureReason::CannotLoadLibs,      "Cannot load libs",     AE},
    {FailureReason::NoSignature,         "No signature",         0},
};

const ReasonMeta& meta_of(FailureReason r) {
    return kReasonMeta[static_cast<int>(r)];
}

} // namespace

const char* failure_reason_name(FailureReason r) {
    return meta_of(r).name;
}

std::optional<FailureReason> failure_reason_from(const std::string& name) {
    for (const ReasonMeta& m : kReasonMeta) {
        if (name == m.name) return m.reason;
    }
    return std::nullopt;
}

std::set<FailureCategory> failure_categories(FailureReason r) {
    std::set<FailureCategory> out;
    const uint8_t bits = meta_of(r).categories;
    if (bits & IF) out.insert(FailureCategory::Infrastructure);
    if (bits & AE) out.insert(FailureCategory::AiEngine);
    if (bits & U) out.insert(FailureCategory::User);
    return out;
}

std::string failure_categories_str(FailureReason r) {
    const uint8_t bits = meta_of(r).categories;
    std::string s;
    if (bits & IF) s += "IF";
    if (bits & AE) s += s.empty() ? "AE" : ",AE";
    if (bits & U) s += s.empty() ? "U" : ",U";
    return s;
}

bool failure_is_deterministic_user(FailureReason r) {
    switch (r) {
        case FailureReason::SyntaxError:
        case FailureReason::SemanticError:
        case FailureReason::IncorrectInputs:
        case FailureReason::ImportError:
            return true;
        default:
            return false;
    }
}

int failure_demand_bucket(int gpu_demand) {
    if (gpu_demand <= 1) return 0;
    if (gpu_demand <= 4) return 1;
    return 2;
}

// --- profile ---------------------------------------------------------------

FailureProfile FailureProfile::parse(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("reasons")) {
        throw ConfigError("failure profile: expected object with 'reasons'");
    }
    FailureProfile profile;
    for (const auto& [name, entry] : doc["reasons"].items()) {
        auto reason = failure_reason_from(name);
        if (!reason) {
            throw ConfigError("failure profile: unknown reason '" + name + "'");
        }
        ReasonProfile rp;
        rp.trial_weight = entry.value("trials", 0.0);
        const auto& rtf = entry.at("rtf_percentiles");
        rp.rtf_p50 = rtf.at(0).get<double>();
        rp.rtf_p90 = rtf.at(1).get<double>();
        rp.rtf_p95 = rtf.at(2).get<double>();
        if (rp.rtf_p50 < 0 || rp.rtf_p90 < rp.rtf_p50 || rp.rtf_p95 < rp.rtf_p90) {
            throw ConfigError("failure profile: non-monotone RTF percentiles for '" + name + "'");
        }
        if (entry.contains("demand")) {
            const auto& d = entry["demand"];
            rp.demand_weights = {d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()};
        }
        profile.reasons[*reason] = rp;
    }
    return profile;
}

FailureProfile FailureProfile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open failure profile " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

// --- failure model -----------------------------------------------------------

namespace {

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

FailureModel::FailureModel(FailureProfile profile, FailureModelConfig config, uint64_t master_seed)
    : profile_(std::move(profile)), config_(config), master_seed_(master_seed) {}

bool FailureModel::job_doomed(const Job& job) const {
    if (!config_.enabled || config_.doomed_fraction <= 0.0) return false;
    RngStream rng = RngStream::from_master(master_seed_, "failure/doom", fnv1a64(job.job_id));
    return rng.uniform() < config_.doomed_fraction;
}

std::vector<FailureReason> FailureModel::sticky_modes_of(const std::string& user_id) const {
    RngStream rng = RngStream::from_master(master_seed_, "failure/sticky", fnv1a64(user_id));
    std::vector<FailureReason> candidates;
    std::vector<double> weights;
    for (const auto& [reason, rp] : profile_.reasons) {
        if (reason == FailureReason::JobPreempted || reason == FailureReason::NoSignature) continue;
        if (failure_is_deterministic_user(reason)) continue;
        candidates.push_back(reason);
        weights.push_back(rp.trial_weight);
    }
    std::vector<FailureReason> modes;
    for (int i = 0; i < config_.sticky_modes_per_user && !candidates.empty(); ++i) {
        modes.push_back(candidates[rng.weighted_index(weights)]);
    }
    return modes;
}

// Deterministic user errors (syntax/semantic/incorrect inputs/import) are a
// property of the program, so they come only from the per-job doom channel.
// Per-execution draws cover the transient reasons.
FailureReason FailureModel::draw_reason(const Job& job, RngStream& rng) const {
    if (config_.user_stickiness > 0.0 && !job.user_id.empty() &&
        rng.uniform() < config_.user_stickiness) {
        auto modes = sticky_modes_of(job.user_id);
        if (!modes.empty()) {
            return modes[rng.uniform_index(modes.size())];
        }
    }
    // Reason conditioned on job size via the demand-bucket weights.
    const int db = failure_demand_bucket(job.gpu_demand);
    std::vector<FailureReason> candidates;
    std::vector<double> weights;
    for (const auto& [reason, rp] : profile_.reasons) {
        if (reason == FailureReason::JobPreempted || reason == FailureReason::NoSignature) continue;
        if (failure_is_deterministic_user(reason)) continue;
        double w = rp.demand_weights[db];
        if (w <= 0.0) w = rp.trial_weight * 1e-3; // keep every reason reachable
        if (w > 0.0) {
            candidates.push_back(reason);
            weights.push_back(w);
        }
    }
    if (candidates.empty()) return FailureReason::NoSignature;
    return candidates[rng.weighted_index(weights)];
}

double FailureModel::rtf_quantile(FailureReason reason, double u) const {
    auto it = profile_.reasons.find(reason);
    if (it == profile_.reasons.end()) {
        return 1.0;
    }
    const ReasonProfile& rp = it->second;
    const double q50 = std::max(rp.rtf_p50, 1e-3);
    const double q90 = std::max(rp.rtf_p90, q50);
    const double q95 = std::max(rp.rtf_p95, q90);
    const double qmin = q50 / 20.0;
    u = std::clamp(u, 0.0, std::nextafter(1.0, 0.0));
    auto log_lerp = [](double lo, double hi, double t) {
        return std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
    };
    if (u <= 0.5) {
        return log_lerp(qmin, q50, u / 0.5);
    }
    if (u <= 0.9) {
        return log_lerp(q50, q90, (u - 0.5) / 0.4);
    }
    if (u <= 0.95) {
        return log_lerp(q90, q95, (u - 0.9) / 0.05);
    }
    // Exponential tail above the 95th; scale continues the q90->q95 spread.
    const double scale = std::max((q95 - q90) / std::log(2.0), q95 * 0.05);
    return q95 + scale * (-std::log((1.0 - u) / 0.05));
}

double FailureModel::sample_rtf(FailureReason reason, RngStream& rng) const {
    return rtf_quantile(reason, rng.uniform());
}

std::optional<FailureDraw> FailureModel::sample_failure(const Job& job, int attempt_index,
                                                        std::optional<FailureReason> prior_reason) const {
    if (!config_.enabled) return std::nullopt;
    RngStream rng = RngStream::from_master(master_seed_, "failure/exec",
                                           fnv1a64(job.job_id) ^ (0x51ed270b0029ULL * (attempt_index + 1)));
    if (job_doomed(job)) {
        // Broken program: fails every execution with a fixed deterministic
        // reason, conditioned on job size via the demand-bucket weights.
        RngStream doom_rng = RngStream::from_master(master_seed_, "failure/doom-reason", fnv1a64(job.job_id));
        static const FailureReason kDoomReasons[] = {
            FailureReason::IncorrectInputs, FailureReason::SemanticError,
            FailureReason::SyntaxError, FailureReason::ImportError};
        const int db = failure_demand_bucket(job.gpu_demand);
        std::vector<double> w;
        for (FailureReason r : kDoomReasons) {
            auto it = profile_.reasons.find(r);
            if (it == profile_.reasons.end()) {
                w.push_back(1.0);
            } else {
                const double weight = it->second.demand_weights[db];
                w.push_back(weight > 0.0 ? weight : it->second.trial_weight * 1e-3);
            }
        }
        FailureDraw draw;
        draw.reason = kDoomReasons[doom_rng.weighted_index(w)];
        draw.rtf_minutes = sample_rtf(draw.reason, rng);
        return draw;
    }
    if (prior_reason && rng.uniform() < config_.refail_prob) {
        FailureDraw draw;
        draw.reason = *prior_reason;
        draw.rtf_minutes = sample_rtf(draw.reason, rng);
        return draw;
    }
    double p = config_.base_failure_prob *
               config_.bucket_multiplier[static_cast<int>(bucket_of(job.gpu_demand))];
    if (rng.uniform() >= std::min(p, 1.0)) {
        return std::nullopt;
    }
    FailureDraw draw;
    draw.reason = draw_reason(job, rng);
    draw.rtf_minutes = sample_rtf(draw.reason, rng);
    return draw;
}

FailureDraw FailureModel::sample_forced_failure(const Job& job, int attempt_index) const {
    RngStream rng = RngStream::from_master(master_seed_, "failure/exec",
                                           fnv1a64(job.job_id) ^ (0x51ed270b0029ULL * (attempt_index + 1)));
    FailureDraw draw;
    draw.reason = draw_reason(job, rng);
    draw.rtf_minutes = sample_rtf(draw.reason, rng);
    return draw;
}

// --- retry policy ------------------------------------------------------------

RetryDecision apply_retry_policy(const Job& job, FailureReason reason, int attempt_index,
                                 RetryPolicyKind policy, Minutes backoff) {
    RetryDecision decision;
    if (policy == RetryPolicyKind::Adaptive && failure_is_deterministic_user(reason)) {
        decision.retry = false;
        return decision;
    }
    if (attempt_index >= job.max_retries) {
        decision.retry = false;
        return decision;
    }
    decision.retry = true;
    decision.backoff = backoff;
    return decision;
}

// --- classifier ----------------------------------------------------------------

LogClassifier::LogClassifier(std::vector<SignatureRule> rules) : rules_(std::move(rules)) {
    std::sort(rules_.begin(), rules_.end(), [](const SignatureRule& a, const SignatureRule& b) {
        if (a.priority != b.priority) return a.priority < b.priority;
        return a.rule_id < b.rule_id;
    });
}

LogClassifier LogClassifier::parse(const std::string& text) {
    std::vector<SignatureRule> rules;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) {
            throw ConfigError("rule file line " + std::to_string(lineno) + ": invalid JSON");
        }
        SignatureRule rule;
        try {
            rule.rule_id = rec.at("rule_id").get<std::string>();
            rule.priority = rec.at("priority").get<int>();
            rule.pattern = rec.at("pattern").get<std::string>();
            const std::string kind = rec.value("pattern_kind", "substring");
            if (kind == "substring") {
                rule.kind = PatternKind::Substring;
            } else if (kind == "regex") {
                rule.kind = PatternKind::Regex;
            } else {
                throw ConfigError("rule file line " + std::to_string(lineno) +
                                  ": pattern_kind must be substring or regex");
            }
            const std::string reason = rec.at("reason").get<std::string>();
            auto r = failure_reason_from(reason);
            if (!r) {
                throw ConfigError("rule file line " + std::to_string(lineno) +
                                  ": unknown reason '" + reason + "'");
            }
            rule.reason = *r;
        } catch (const json::exception& e) {
            throw ConfigError("rule file line " + std::to_string(lineno) + ": " + e.what());
        }
        rules.push_back(std::move(rule));
    }
    return LogClassifier(std::move(rules));
}

LogClassifier LogClassifier::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open rule file " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

Classification LogClassifier::classify(const std::string& log_text) const {
    // Rules are pre-sorted by (priority, rule_id); first match is the winner.
    for (const SignatureRule& rule : rules_) {
        bool hit = false;
        if (rule.kind == PatternKind::Substring) {
            hit = log_text.find(rule.pattern) != std::string::npos;
        } else {
            std::regex re(rule.pattern, std::regex::ECMAScript);
            hit = std::regex_search(log_text, re);
        }
        if (hit) {
            Classification c;
            c.reason = rule.reason;
            c.categories = failure_categories(rule.reason);
            c.rule_id = rule.rule_id;
            return c;
        }
    }
    return Classification{};
}

// --- stats ----------------------------------------------------------------------

namespace {

double percentile(std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    const double idx = p * (static_cast<double>(sorted.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(idx));
    const double t = idx - static_cast<double>(lo);
    return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

} // namespace

FailureStats failure_stats(const std::vector<FailureRecord>& records) {
    FailureStats stats;
    std::map<FailureReason, std::vector<double>> rtfs;
    std::map<FailureReason, std::set<std::string>> jobs;
    std::map<FailureReason, std::set<std::string>> users;
    double grand_rtf_demand = 0.0;
    double grand_rtf = 0.0;
    for (const FailureRecord& rec : records) {
        ReasonStats& rs = stats.by_reason[rec.reason];
        ++rs.trials;
        ++stats.total_trials;
        rs.rtf_total += rec.rtf_minutes;
        rs.rtf_demand += rec.rtf_minutes * rec.gpu_demand;
        ++rs.demand_counts[failure_demand_bucket(rec.gpu_demand)];
        rtfs[rec.reason].push_back(rec.rtf_minutes);
        jobs[rec.reason].insert(rec.job_id);
        if (!rec.user_id.empty()) users[rec.reason].insert(rec.user_id);
        grand_rtf_demand += rec.rtf_minutes * rec.gpu_demand;
        grand_rtf += rec.rtf_minutes;
    }
    for (auto& [reason, rs] : stats.by_reason) {
        auto& v = rtfs[reason];
        std::sort(v.begin(), v.end());
        rs.rtf_p50 = percentile(v, 0.50);
        rs.rtf_p90 = percentile(v, 0.90);
        rs.rtf_p95 = percentile(v, 0.95);
        rs.jobs = static_cast<int>(jobs[reason].size());
        rs.users = static_cast<int>(users[reason].size());
        rs.rtf_demand_share = grand_rtf_demand > 0.0 ? 100.0 * rs.rtf_demand / grand_rtf_demand : 0.0;
        rs.rtf_share = grand_rtf > 0.0 ? 100.0 * rs.rtf_total / grand_rtf : 0.0;
    }
    // Repetition factors over the top-8 reasons by trial count.
    std::vector<std::pair<int, FailureReason>> order;
    for (const auto& [reason, rs] : stats.by_reason) {
        order.emplace_back(rs.trials, reason);
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return static_cast<int>(a.second) < static_cast<int>(b.second);
    });
    int top_trials = 0, top_jobs = 0, top_users = 0;
    for (std::size_t i = 0; i < order.size() && i < 8; ++i) {
        const ReasonStats& rs = stats.by_reason[order[i].second];
        top_trials += rs.trials;
        top_jobs += rs.jobs;
        top_users += rs.users;
    }
    stats.repetition_per_job = top_jobs > 0 ? static_cast<double>(top_trials) / top_jobs : 0.0;
    stats.repetition_per_user = top_users > 0 ? static_cast<double>(top_trials) / top_users : 0.0;
    return stats;
}

} // namespace gpusim
