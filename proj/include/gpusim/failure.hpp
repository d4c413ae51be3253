#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gpusim/engine.hpp"
#include "gpusim/workload.hpp"

namespace gpusim {

enum class FailureReason : int {
    CpuOutOfMemory = 0,
    IncorrectInputs,
    SemanticError,
    CoreDump,
    InvalidMemAccess,
    ModelCkptError,
    CudaFailure,
    SyntaxError,
    TracebackFromCrash,
    MpiError,
    GpuOutOfMemory,
    MpiRuntimeFailure,
    PermissionError,
    ImportError,
    JobPreempted,
    CudaInitFailed,
    ModelDiverged,
    CudaVersionMismatch,
    GpuEccError,
    OutputNodeError,
    CannotLoadLibs,
    NoSignature,
};

constexpr int kFailureReasonCount = 22; // 21 classified reasons + NoSignature

const char* failure_reason_name(FailureReason r);
std::optional<FailureReason> failure_reason_from(const std::string& name);

enum class FailureCategory : int { Infrastructure = 0, AiEngine = 1, User = 2 };

/// Category marks per reason, as a set over {IF, AE, U}.
std::set<FailureCategory> failure_categories(FailureReason r);
std::string failure_categories_str(FailureReason r);

/// Reasons that reproduce deterministically from the program/config alone
/// (syntax, semantic, incorrect inputs, import). Basis of adaptive retries
/// and pre-run screening.
bool failure_is_deterministic_user(FailureReason r);

struct ReasonProfile {
    double trial_weight = 0.0;           // relative occurrence weight
    double rtf_p50 = 0.0;                // minutes
    double rtf_p90 = 0.0;
    double rtf_p95 = 0.0;
    std::array<double, 3> demand_weights{0.0, 0.0, 0.0}; // demand 1 / 2-4 / >4
};

struct FailureProfile {
    std::map<FailureReason, ReasonProfile> reasons;

    /// Loads the structured-text profile (JSON mirroring the reason table
    /// columns). Throws ConfigError on malformed input.
    static FailureProfile load(const std::string& path);
    static FailureProfile parse(const std::string& text);
};

struct FailureModelConfig {
    bool enabled = true;
    double base_failure_prob = 0.22;       // fresh failure chance per execution
    std::array<double, kGpuBucketCount> bucket_multiplier{1.0, 1.25, 1.45, 1.8};
    double doomed_fraction = 0.16;         // jobs whose code fails deterministically
    double refail_prob = 0.55;             // same-reason repeat on retry
    double user_stickiness = 0.35;         // fresh failures drawn from the user's modes
    int sticky_modes_per_user = 2;
};

struct FailureDraw {
    FailureReason reason = FailureReason::NoSignature;
    double rtf_minutes = 0.0;
};

/**
 * Failure injection. All draws are keyed by (job id, attempt index) so a
 * job's failures are independent of event interleaving and of which other
 * jobs exist in the run.
 */
class FailureModel {
public:
    FailureModel() = default;
    FailureModel(FailureProfile profile, FailureModelConfig config, uint64_t master_seed);

    /// Optional failure for this execution. prior_reason is the reason the
    /// previous attempt of the same job failed with, if any.
    std::optional<FailureDraw> sample_failure(const Job& job, int attempt_index,
                                              std::optional<FailureReason> prior_reason) const;

    /// Forced failure (replay of an unsuccessful job): always returns a draw.
    FailureDraw sample_forced_failure(const Job& job, int attempt_index) const;

    bool job_doomed(const Job& job) const;
    /// Inverse-CDF RTF sampler for one reason (u in [0,1)).
    double rtf_quantile(FailureReason reason, double u) const;
    double sample_rtf(FailureReason reason, RngStream& rng) const;

    const FailureProfile& profile() const { return profile_; }
    const FailureModelConfig& config() const { return config_; }

private:
    FailureReason draw_reason(const Job& job, RngStream& rng) const;
    std::vector<FailureReason> sticky_modes_of(const std::string& user_id) const;

    FailureProfile profile_;
    FailureModelConfig config_;
    uint64_t master_seed_ = 0;
};

// --- retry policy ---------------------------------------------------------

enum class RetryPolicyKind { Static, Adaptive };

struct RetryDecision {
    bool retry = false;
    Minutes backoff = 0.0;
};

/// Static policy retries until the attempt budget is exhausted. The adaptive
/// policy additionally stops immediately on deterministic user errors.
RetryDecision apply_retry_policy(const Job& job, FailureReason reason, int attempt_index,
                                 RetryPolicyKind policy, Minutes backoff);

// --- log classification ----------------------------------------------------

enum class PatternKind { Substring, Regex };

struct SignatureRule {
    std::string rule_id;
    int priority = 0;              // lower = closer to the root cause
    std::string pattern;
    PatternKind kind = PatternKind::Substring;
    FailureReason reason = FailureReason::NoSignature;
};

struct Classification {
    FailureReason reason = FailureReason::NoSignature;
    std::set<FailureCategory> categories;
    std::string rule_id; // empty when no rule matched
};

class LogClassifier {
public:
    LogClassifier() = default;
    explicit LogClassifier(std::vector<SignatureRule> rules);

    /// Loads the line-delimited JSON rule file. Throws ConfigError.
    static LogClassifier load(const std::string& path);
    static LogClassifier parse(const std::string& text);

    /// Evaluates every rule; among matches the lowest priority number wins
    /// (ties by rule_id). Pure: identical input gives identical output.
    Classification classify(const std::string& log_text) const;

    const std::vector<SignatureRule>& rules() const { return rules_; }

private:
    std::vector<SignatureRule> rules_; // sorted by (priority, rule_id)
};

// --- failure bookkeeping ----------------------------------------------------

struct FailureRecord {
    std::string job_id;
    std::string user_id;
    int attempt_index = 0;
    FailureReason reason = FailureReason::NoSignature;
    double rtf_minutes = 0.0;
    int gpu_demand = 1;
    Minutes time = 0.0;
    bool on_cluster = true; // false when caught in the pre-run pool
};

struct ReasonStats {
    int trials = 0;
    int jobs = 0;
    int users = 0;
    double rtf_p50 = 0.0;
    double rtf_p90 = 0.0;
    double rtf_p95 = 0.0;
    double rtf_total = 0.0;
    std::array<int, 3> demand_counts{0, 0, 0}; // 1 / 2-4 / >4
    double rtf_demand = 0.0;                   // sum of rtf * demand
    double rtf_demand_share = 0.0;             // percent of the grand total
    double rtf_share = 0.0;                    // percent of total rtf
};

struct FailureStats {
    std::map<FailureReason, ReasonStats> by_reason;
    double repetition_per_job = 0.0;  // trials/jobs over the top-8 reasons
    double repetition_per_user = 0.0; // trials/users over the top-8 reasons
    int total_trials = 0;
};

FailureStats failure_stats(const std::vector<FailureRecord>& records);

/// Demand column for the failure table: 0 for 1 GPU, 1 for 2-4, 2 for >4.
int failure_demand_bucket(int gpu_demand);

} // namespace gpusim
