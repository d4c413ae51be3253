#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gpusim/failure.hpp"

using namespace gpusim;

namespace {

const char* kDataDir = GPUSIM_DATA_DIR;

FailureProfile shipped_profile() {
    return FailureProfile::load(std::string(kDataDir) + "/failure_profile.json");
}

LogClassifier shipped_classifier() {
    return LogClassifier::load(std::string(kDataDir) + "/failure_rules.jsonl");
}

double empirical_percentile(std::vector<double>& sorted, double p) {
    const std::size_t idx = static_cast<std::size_t>(p * (sorted.size() - 1));
    return sorted[idx];
}

Job mk_job(const std::string& id, int demand, const std::string& user = "u1") {
    Job job;
    job.job_id = id;
    job.vc_id = "vc1";
    job.user_id = user;
    job.gpu_demand = demand;
    job.work = 10000.0;
    return job;
}

} // namespace

TEST_CASE("reason names round-trip and carry their category marks") {
    for (int i = 0; i < kFailureReasonCount; ++i) {
        const FailureReason reason = static_cast<FailureReason>(i);
        auto back = failure_reason_from(failure_reason_name(reason));
        REQUIRE(back.has_value());
        CHECK(*back == reason);
        if (reason != FailureReason::NoSignature) {
            CHECK(!failure_categories(reason).empty());
        }
    }
    // spot checks against the shipped taxonomy
    CHECK(failure_categories(FailureReason::ImportError) ==
          std::set<FailureCategory>{FailureCategory::Infrastructure, FailureCategory::User});
    CHECK(failure_categories(FailureReason::ModelCkptError) ==
          std::set<FailureCategory>{FailureCategory::Infrastructure});
    CHECK(failure_categories(FailureReason::TracebackFromCrash) ==
          std::set<FailureCategory>{FailureCategory::Infrastructure, FailureCategory::AiEngine,
                                    FailureCategory::User});
}

TEST_CASE("rtf sampling matches the anchor percentiles within ten percent") {
    FailureModel model(shipped_profile(), FailureModelConfig{}, 1);
    struct Case {
        FailureReason reason;
        double p50, p90, p95;
    };
    const Case cases[] = {
        {FailureReason::IncorrectInputs, 1.87, 404.83, 2095.73},
        {FailureReason::MpiRuntimeFailure, 1389.48, 13778.60, 18090.88},
    };
    for (const Case& c : cases) {
        RngStream rng(42);
        std::vector<double> samples;
        samples.reserve(100000);
        for (int i = 0; i < 100000; ++i) {
            samples.push_back(model.sample_rtf(c.reason, rng));
        }
        std::sort(samples.begin(), samples.end());
        CHECK(std::abs(empirical_percentile(samples, 0.50) - c.p50) < 0.10 * c.p50);
        CHECK(std::abs(empirical_percentile(samples, 0.90) - c.p90) < 0.10 * c.p90);
        CHECK(std::abs(empirical_percentile(samples, 0.95) - c.p95) < 0.10 * c.p95);
        CHECK(samples.front() >= 0.0);
    }
}

TEST_CASE("infrastructure failures run far longer before failing than syntax errors") {
    FailureModel model(shipped_profile(), FailureModelConfig{}, 1);
    RngStream rng(7);
    double mpi_sum = 0.0, syntax_sum = 0.0;
    std::vector<double> mpi, syntax;
    for (int i = 0; i < 20000; ++i) {
        mpi.push_back(model.sample_rtf(FailureReason::MpiRuntimeFailure, rng));
        syntax.push_back(model.sample_rtf(FailureReason::SyntaxError, rng));
    }
    std::sort(mpi.begin(), mpi.end());
    std::sort(syntax.begin(), syntax.end());
    (void)mpi_sum;
    (void)syntax_sum;
    CHECK(mpi[mpi.size() / 2] > 100.0 * syntax[syntax.size() / 2]);
}

TEST_CASE("failure probability zero never fires") {
    FailureModelConfig config;
    config.base_failure_prob = 0.0;
    config.doomed_fraction = 0.0;
    FailureModel model(shipped_profile(), config, 3);
    for (int i = 0; i < 500; ++i) {
        CHECK_FALSE(model.sample_failure(mk_job("j" + std::to_string(i), 2), 0, std::nullopt));
    }
}

TEST_CASE("disabled failure model never fires") {
    FailureModelConfig config;
    config.enabled = false;
    FailureModel model(shipped_profile(), config, 3);
    CHECK_FALSE(model.sample_failure(mk_job("a", 4), 0, std::nullopt));
}

TEST_CASE("failure draws are keyed by job and execution index") {
    FailureModel model(shipped_profile(), FailureModelConfig{}, 11);
    const Job job = mk_job("stable", 4);
    auto first = model.sample_failure(job, 0, std::nullopt);
    auto again = model.sample_failure(job, 0, std::nullopt);
    CHECK(first.has_value() == again.has_value());
    if (first && again) {
        CHECK(first->reason == again->reason);
        CHECK(first->rtf_minutes == again->rtf_minutes);
    }
}

TEST_CASE("jobs with more than four GPUs fail more often than single-GPU jobs") {
    FailureModel model(shipped_profile(), FailureModelConfig{}, 5);
    int small_failures = 0, large_failures = 0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        if (model.sample_failure(mk_job("s" + std::to_string(i), 1), 0, std::nullopt)) {
            ++small_failures;
        }
        if (model.sample_failure(mk_job("l" + std::to_string(i), 16), 0, std::nullopt)) {
            ++large_failures;
        }
    }
    CHECK(large_failures > small_failures);
}

TEST_CASE("static retry policy exhausts the attempt budget") {
    Job job = mk_job("r", 2);
    job.max_retries = 5;
    auto d0 = apply_retry_policy(job, FailureReason::CudaFailure, 0, RetryPolicyKind::Static, 2.0);
    CHECK(d0.retry);
    CHECK(d0.backoff == doctest::Approx(2.0));
    auto d4 = apply_retry_policy(job, FailureReason::CudaFailure, 4, RetryPolicyKind::Static, 2.0);
    CHECK(d4.retry);
    auto d5 = apply_retry_policy(job, FailureReason::CudaFailure, 5, RetryPolicyKind::Static, 2.0);
    CHECK_FALSE(d5.retry);
}

TEST_CASE("adaptive retry policy stops deterministic user errors immediately") {
    Job job = mk_job("r", 2);
    auto adaptive =
        apply_retry_policy(job, FailureReason::IncorrectInputs, 0, RetryPolicyKind::Adaptive, 2.0);
    CHECK_FALSE(adaptive.retry);
    auto cuda = apply_retry_policy(job, FailureReason::CudaFailure, 0, RetryPolicyKind::Adaptive, 2.0);
    CHECK(cuda.retry);
    auto still_static =
        apply_retry_policy(job, FailureReason::IncorrectInputs, 0, RetryPolicyKind::Static, 2.0);
    CHECK(still_static.retry);
}

TEST_CASE("classifier prefers the root cause over consequences") {
    LogClassifier classifier = shipped_classifier();
    const std::string log =
        "Traceback (most recent call last):\n"
        "  File \"train.py\", line 10, in step\n"
        "Segmentation fault (core dumped)\n";
    Classification c = classifier.classify(log);
    CHECK(c.reason == FailureReason::InvalidMemAccess);
}

TEST_CASE("classifier returns NoSignature on an empty log") {
    LogClassifier classifier = shipped_classifier();
    Classification c = classifier.classify("");
    CHECK(c.reason == FailureReason::NoSignature);
    CHECK(c.rule_id.empty());
}

TEST_CASE("import errors classify with their infrastructure and user marks") {
    LogClassifier classifier = shipped_classifier();
    Classification c = classifier.classify("ImportError: No module named horovod");
    CHECK(c.reason == FailureReason::ImportError);
    CHECK(c.categories ==
          std::set<FailureCategory>{FailureCategory::Infrastructure, FailureCategory::User});
}

TEST_CASE("classification is pure and deterministic") {
    LogClassifier classifier = shipped_classifier();
    const std::string log = "RuntimeError: CUDA out of memory. Tried to allocate 2.00 GiB";
    Classification first = classifier.classify(log);
    for (int i = 0; i < 100; ++i) {
        Classification again = classifier.classify(log);
        CHECK(again.reason == first.reason);
        CHECK(again.rule_id == first.rule_id);
    }
}

TEST_CASE("shipped corpus classifies with full agreement") {
    LogClassifier classifier = shipped_classifier();
    std::ifstream in(std::string(kDataDir) + "/log_corpus.jsonl");
    REQUIRE(in.good());
    std::string line;
    int total = 0;
    std::map<FailureReason, int> per_reason;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json rec = nlohmann::json::parse(line);
        const std::string label = rec.at("label").get<std::string>();
        const std::string log = rec.at("log").get<std::string>();
        auto expected = failure_reason_from(label);
        REQUIRE(expected.has_value());
        const Classification got = classifier.classify(log);
        INFO("log labeled '", label, "' classified as '", failure_reason_name(got.reason), "'");
        CHECK(got.reason == *expected);
        ++total;
        ++per_reason[*expected];
    }
    CHECK(total >= 42);
    // every classified reason is reachable with at least two samples
    for (int i = 0; i < kFailureReasonCount; ++i) {
        const FailureReason reason = static_cast<FailureReason>(i);
        if (reason == FailureReason::NoSignature) continue;
        CHECK(per_reason[reason] >= 2);
    }
}

TEST_CASE("every reason has at least one rule") {
    LogClassifier classifier = shipped_classifier();
    std::set<FailureReason> covered;
    for (const SignatureRule& rule : classifier.rules()) {
        covered.insert(rule.reason);
    }
    for (int i = 0; i < kFailureReasonCount; ++i) {
        const FailureReason reason = static_cast<FailureReason>(i);
        if (reason == FailureReason::NoSignature) continue;
        CHECK(covered.count(reason) == 1);
    }
}

TEST_CASE("failure_stats aggregates one record as a full share") {
    FailureRecord rec;
    rec.job_id = "j";
    rec.user_id = "u";
    rec.reason = FailureReason::CudaFailure;
    rec.rtf_minutes = 12.0;
    rec.gpu_demand = 2;
    FailureStats stats = failure_stats({rec});
    CHECK(stats.by_reason.at(FailureReason::CudaFailure).rtf_demand_share == doctest::Approx(100.0));
    CHECK(stats.by_reason.at(FailureReason::CudaFailure).trials == 1);
}

TEST_CASE("gpu-time weighting shifts shares toward big jobs") {
    FailureRecord a;
    a.job_id = "a";
    a.reason = FailureReason::SyntaxError;
    a.rtf_minutes = 10.0;
    a.gpu_demand = 1;
    FailureRecord b;
    b.job_id = "b";
    b.reason = FailureReason::SemanticError;
    b.rtf_minutes = 10.0;
    b.gpu_demand = 4;
    FailureStats stats = failure_stats({a, b});
    CHECK(stats.by_reason.at(FailureReason::SyntaxError).rtf_demand_share == doctest::Approx(20.0));
    CHECK(stats.by_reason.at(FailureReason::SemanticError).rtf_demand_share == doctest::Approx(80.0));
}

TEST_CASE("failure demand buckets split at one and four GPUs") {
    CHECK(failure_demand_bucket(1) == 0);
    CHECK(failure_demand_bucket(2) == 1);
    CHECK(failure_demand_bucket(4) == 1);
    CHECK(failure_demand_bucket(5) == 2);
}

TEST_CASE("malformed rule files are rejected with the line number") {
    CHECK_THROWS_AS(LogClassifier::parse("{\"rule_id\": \"x\"}"), ConfigError);
    CHECK_THROWS_AS(LogClassifier::parse("not json"), ConfigError);
    CHECK_THROWS_AS(
        LogClassifier::parse(
            R"({"rule_id":"x","priority":1,"pattern":"p","pattern_kind":"glob","reason":"Syntax error"})"),
        ConfigError);
    CHECK_THROWS_AS(
        LogClassifier::parse(
            R"({"rule_id":"x","priority":1,"pattern":"p","pattern_kind":"substring","reason":"Nope"})"),
        ConfigError);
}
