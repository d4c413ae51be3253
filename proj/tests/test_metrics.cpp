#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gpusim/config.hpp"
#include "gpusim/experiment.hpp"
#include "gpusim/metrics.hpp"

using namespace gpusim;

namespace {

SimInputs small_inputs(uint64_t seed) {
    SimInputs in;
    in.topo = build_topology({RackSpec{2, 8, 64, 512}, RackSpec{2, 8, 64, 512}});
    in.vcs = {{"vc1", 16}, {"vc2", 16}};
    WorkloadParams params;
    params.job_count = 150;
    params.vc_arrival_weights = {{"vc1", 0.6}, {"vc2", 0.4}};
    params.buckets.resize(4);
    params.buckets[0] = {0.5, {{1, 1.0}}, 30.0, {}};
    params.buckets[1] = {0.3, {{2, 0.7}, {4, 0.3}}, 40.0, {}};
    params.buckets[2] = {0.15, {{8, 1.0}}, 60.0, {}};
    params.buckets[3] = {0.05, {{16, 1.0}}, 90.0, {}};
    params.tail = {0.01, 500.0, 1.5};
    params.total_gpus = 32;
    params.arrival_load = 0.9;
    params.killed_fraction = 0.1;
    params.user_count = 8;
    in.jobs = generate_workload(params, seed);
    in.failure_profile = FailureProfile::load(std::string(GPUSIM_DATA_DIR) + "/failure_profile.json");
    in.seed = seed;
    return in;
}

MetricsReport report_of(const SimInputs& in) {
    RunResult run = run_simulation(in);
    ReportMeta meta;
    meta.scenario = "test";
    meta.seed = in.seed;
    meta.config_hash = "cafe";
    return build_report(in, run, meta, ReportOptions{});
}

} // namespace

TEST_CASE("compute_cdf on a single sample") {
    Cdf cdf = compute_cdf({5.0});
    REQUIRE(cdf.size() == 1);
    CHECK(cdf[0].value == 5.0);
    CHECK(cdf[0].probability == 1.0);
}

TEST_CASE("compute_cdf counts duplicates") {
    Cdf cdf = compute_cdf({1.0, 1.0, 3.0});
    REQUIRE(cdf.size() == 2);
    CHECK(cdf[0].value == 1.0);
    CHECK(cdf[0].probability == doctest::Approx(2.0 / 3.0));
    CHECK(cdf[1].value == 3.0);
    CHECK(cdf[1].probability == 1.0);
}

TEST_CASE("compute_cdf of nothing is empty") {
    CHECK(compute_cdf({}).empty());
}

TEST_CASE("report CDFs are monotone and end at probability one") {
    MetricsReport report = report_of(small_inputs(3));
    auto check_cdf = [](const Cdf& cdf) {
        if (cdf.empty()) return;
        double pv = -1e300, pp = 0.0;
        for (const CdfPoint& p : cdf) {
            CHECK(p.value >= pv);
            CHECK(p.probability >= pp);
            pv = p.value;
            pp = p.probability;
        }
        CHECK(cdf.back().probability == doctest::Approx(1.0));
    };
    for (const auto& [vc, buckets] : report.delay.queueing_delay_cdf) {
        for (const auto& [bucket, cdf] : buckets) check_cdf(cdf);
    }
    for (const auto& [bucket, cdf] : report.utilization.cdf_by_bucket) check_cdf(cdf);
    for (const auto& [status, cdf] : report.utilization.cdf_by_status) check_cdf(cdf);
    check_cdf(report.convergence.passed_fraction_cdf);
}

TEST_CASE("status counts and GPU-time shares reconcile") {
    MetricsReport report = report_of(small_inputs(4));
    CHECK(report.status.passed + report.status.killed + report.status.unsuccessful ==
          report.status.submitted);
    const double share_sum = report.status.gpu_time_share_passed +
                             report.status.gpu_time_share_killed +
                             report.status.gpu_time_share_unsuccessful;
    CHECK(share_sum == doctest::Approx(100.0).epsilon(0.0001));
}

TEST_CASE("identical seeds produce byte-identical reports") {
    MetricsReport a = report_of(small_inputs(9));
    MetricsReport b = report_of(small_inputs(9));
    CHECK(report_to_json(a).dump() == report_to_json(b).dump());
}

TEST_CASE("report json round-trips to equal values") {
    MetricsReport report = report_of(small_inputs(12));
    const nlohmann::json doc = report_to_json(report);
    MetricsReport back = report_from_json(doc);
    CHECK(report_to_json(back).dump() == doc.dump());
}

TEST_CASE("diff of a report with itself is all zeros") {
    MetricsReport report = report_of(small_inputs(5));
    DiffResult diff = diff_reports(report, report);
    CHECK(diff.paired);
    for (const DiffEntry& e : diff.entries) {
        CHECK(e.delta == 0.0);
    }
}

TEST_CASE("diff flags non-paired comparisons and schema mismatches") {
    MetricsReport a = report_of(small_inputs(5));
    MetricsReport b = report_of(small_inputs(6));
    DiffResult diff = diff_reports(a, b);
    CHECK_FALSE(diff.paired);
    bool any_nonzero = false;
    for (const DiffEntry& e : diff.entries) {
        if (e.delta != 0.0) any_nonzero = true;
    }
    CHECK(any_nonzero);

    MetricsReport c = a;
    c.meta.schema_version = "999";
    CHECK_THROWS_AS(diff_reports(a, c), SchemaMismatch);
}

TEST_CASE("write_report_files emits the report, manifest and csv views") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "gpusim_report_test";
    fs::remove_all(dir);
    MetricsReport report = report_of(small_inputs(8));
    write_report_files(report, dir.string());
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "run_manifest.json"));
    CHECK(fs::exists(dir / "queueing_delay_cdf.csv"));
    CHECK(fs::exists(dir / "utilization_cdf.csv"));
    CHECK(fs::exists(dir / "failures.csv"));
    CHECK(fs::exists(dir / "status.csv"));
    CHECK(fs::exists(dir / "convergence.csv"));

    MetricsReport back = read_report((dir / "report.json").string());
    CHECK(report_to_json(back).dump() == report_to_json(report).dump());

    // failures.csv mirrors the report rows
    std::ifstream csv(dir / "failures.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header.find("reason,trials") == 0);
    int rows = 0;
    std::string line;
    while (std::getline(csv, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == static_cast<int>(report.failures.by_reason.size()));
    fs::remove_all(dir);
}

TEST_CASE("config loading reports missing keys by name") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "gpusim_cfg_test";
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "bad.json");
        out << R"({"topology": {"racks": [{"servers": 1, "gpus_per_server": 4}]}})";
    }
    try {
        load_config((dir / "bad.json").string());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("virtual_clusters") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("config requires a seed from somewhere") {
    ExperimentConfig config;
    config.topology = {RackSpec{1, 4, 16, 64}};
    config.vcs = {{"vc1", 4}};
    WorkloadParams params;
    params.job_count = 1;
    params.vc_arrival_weights = {{"vc1", 1.0}};
    params.buckets.resize(4);
    params.buckets[0] = {1.0, {{1, 1.0}}, 10.0, {}};
    params.buckets[1] = {0.0, {}, 10.0, {}};
    params.buckets[2] = {0.0, {}, 10.0, {}};
    params.buckets[3] = {0.0, {}, 10.0, {}};
    config.workload = params;
    CHECK_THROWS_AS(resolve_inputs(config, std::nullopt, false), ConfigError);
    CHECK_NOTHROW(resolve_inputs(config, 5, false));
}

TEST_CASE("config hash is stable and sensitive") {
    nlohmann::json a = {{"x", 1}, {"y", "z"}};
    nlohmann::json b = {{"x", 2}, {"y", "z"}};
    CHECK(config_hash_hex(a) == config_hash_hex(a));
    CHECK(config_hash_hex(a) != config_hash_hex(b));
    CHECK(config_hash_hex(a).size() == 16);
}
