#include "gpusim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gpusim/errors.hpp"

namespace gpusim {

using nlohmann::json;

Cdf compute_cdf(std::vector<double> samples) {
    Cdf cdf;
    if (samples.empty()) return cdf;
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i + 1 == samples.size() || samples[i + 1] != samples[i]) {
            cdf.push_back({samples[i], static_cast<double>(i + 1) / n});
        }
    }
    return cdf;
}

Cdf cdf_from_histogram(const UtilizationHistogram& hist) {
    Cdf cdf;
    if (hist.count == 0) return cdf;
    int64_t acc = 0;
    for (std::size_t bin = 0; bin < hist.bins.size(); ++bin) {
        if (hist.bins[bin] == 0) continue;
        acc += hist.bins[bin];
        cdf.push_back({static_cast<double>(bin), static_cast<double>(acc) / hist.count});
    }
    return cdf;
}

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

MetricsReport build_report(const SimInputs& inputs, const RunResult& run, const ReportMeta& meta,
                           const ReportOptions& options) {
    const double delta = options.convergence_delta;
    MetricsReport report;
    report.meta = meta;
    report.snapshots = run.snapshots;

    // --- status ---------------------------------------------------------
    StatusSection& st = report.status;
    st.submitted = static_cast<int64_t>(run.outcomes.size());
    double gpu_time_passed = 0.0, gpu_time_killed = 0.0, gpu_time_unsuccessful = 0.0;
    for (const JobOutcome& out : run.outcomes) {
        switch (out.status) {
            case JobStatus::Passed: ++st.passed; gpu_time_passed += out.gpu_time; break;
            case JobStatus::Killed: ++st.killed; gpu_time_killed += out.gpu_time; break;
            case JobStatus::Unsuccessful: ++st.unsuccessful; gpu_time_unsuccessful += out.gpu_time; break;
            case JobStatus::Pending: break;
        }
        st.pool_gpu_time += out.pool_time;
    }
    st.gpu_time_total = gpu_time_passed + gpu_time_killed + gpu_time_unsuccessful;
    if (st.gpu_time_total > 0.0) {
        st.gpu_time_share_passed = 100.0 * gpu_time_passed / st.gpu_time_total;
        st.gpu_time_share_killed = 100.0 * gpu_time_killed / st.gpu_time_total;
        st.gpu_time_share_unsuccessful = 100.0 * gpu_time_unsuccessful / st.gpu_time_total;
    }

    // --- queueing delay ---------------------------------------------------
    DelaySection& dl = report.delay;
    std::map<std::string, std::map<std::string, std::vector<double>>> delay_samples;
    std::map<std::string, std::vector<double>> delay_by_bucket;
    std::map<int, std::vector<double>> gt8_delay_by_stage;
    std::map<std::string, int64_t> bucket_jobs;
    std::map<std::string, int64_t> bucket_bypassed;
    double delay_sum = 0.0;
    int64_t delay_count = 0;
    for (const JobOutcome& out : run.outcomes) {
        if (out.first_start < 0.0) continue; // never ran
        const std::string bucket = gpu_bucket_name(out.bucket);
        delay_samples[out.vc_id][bucket].push_back(out.queueing_delay);
        delay_by_bucket[bucket].push_back(out.queueing_delay);
        delay_sum += out.queueing_delay;
        ++delay_count;
        ++bucket_jobs[bucket];
        if (out.bypassed_by_ooo) ++bucket_bypassed[bucket];
        if (out.bucket == GpuBucket::B_GT8 && out.placement_stage >= 0 &&
            out.submit_time >= options.fig4_warmup_min) {
            gt8_delay_by_stage[out.placement_stage].push_back(out.queueing_delay);
        }
        // Delay-cause frequencies: each maximal interval of one cause is one
        // occurrence. Considers distributed jobs that ran for at least a
        // minute.
        for (const DelayInterval& iv : out.ledger) {
            (iv.cause == DelayCause::FairShare ? dl.fair_share_minutes : dl.fragmentation_minutes) +=
                iv.end - iv.start;
            if (out.gpu_demand >= 2 && out.gpu_time >= out.gpu_demand) {
                if (iv.cause == DelayCause::FairShare) {
                    ++dl.fair_share_occurrences[bucket];
                } else {
                    ++dl.fragmentation_occurrences[bucket];
                }
            }
        }
    }
    for (auto& [vc, buckets] : delay_samples) {
        for (auto& [bucket, samples] : buckets) {
            dl.queueing_delay_cdf[vc][bucket] = compute_cdf(samples);
        }
    }
    for (auto& [bucket, samples] : delay_by_bucket) {
        dl.queueing_delay_by_bucket[bucket] = compute_cdf(samples);
    }
    for (auto& [stage, samples] : gt8_delay_by_stage) {
        dl.gt8_median_delay_by_stage[stage] = median_of(samples);
        dl.gt8_jobs_by_stage[stage] = static_cast<int64_t>(samples.size());
    }
    for (const auto& [bucket, jobs] : bucket_jobs) {
        dl.bypassed_fraction[bucket] =
            jobs > 0 ? static_cast<double>(bucket_bypassed[bucket]) / jobs : 0.0;
    }
    dl.ooo_fraction =
        run.placements > 0 ? static_cast<double>(run.ooo_placements) / run.placements : 0.0;
    dl.mean_queueing_delay = delay_count > 0 ? delay_sum / delay_count : 0.0;

    // --- utilization -------------------------------------------------------
    UtilizationSection& ut = report.utilization;
    for (int b = 0; b < kGpuBucketCount; ++b) {
        const UtilizationHistogram& hist = run.util_by_bucket[b];
        const std::string name = gpu_bucket_name(static_cast<GpuBucket>(b));
        if (hist.count == 0) continue;
        ut.cdf_by_bucket[name] = cdf_from_histogram(hist);
        ut.mean_by_bucket[name] = hist.mean();
        ut.samples_by_bucket[name] = hist.count;
    }
    for (const auto& [status, hist] : run.util_by_status) {
        if (hist.count > 0) ut.cdf_by_status[status] = cdf_from_histogram(hist);
    }
    for (const auto& [spread, hist] : run.util_16gpu_by_spread) {
        if (hist.count == 0) continue;
        ut.mean_16gpu_by_spread[spread] = hist.mean();
        ut.samples_16gpu_by_spread[spread] = hist.count;
    }

    // --- placement ----------------------------------------------------------
    PlacementSection& pl = report.placement;
    pl.placements = run.placements;
    pl.ooo_placements = run.ooo_placements;
    pl.colocated_placements = run.colocated_placements;
    std::map<std::string, std::pair<double, int64_t>> servers_acc;
    std::map<std::string, std::pair<double, int64_t>> slowdown_acc;
    for (const JobOutcome& out : run.outcomes) {
        if (out.first_start < 0.0) continue;
        const std::string bucket = gpu_bucket_name(out.bucket);
        servers_acc[bucket].first += out.servers_used;
        ++servers_acc[bucket].second;
        slowdown_acc[bucket].first += out.slowdown;
        ++slowdown_acc[bucket].second;
    }
    for (const auto& [bucket, acc] : servers_acc) {
        pl.mean_servers_by_bucket[bucket] = acc.first / acc.second;
    }
    for (const auto& [bucket, acc] : slowdown_acc) {
        pl.mean_slowdown_by_bucket[bucket] = acc.first / acc.second;
    }

    // --- convergence -----------------------------------------------------------
    ConvergenceSection& cv = report.convergence;
    cv.delta = delta;
    std::vector<ConvergenceInput> conv_inputs;
    for (std::size_t i = 0; i < run.outcomes.size(); ++i) {
        const JobOutcome& out = run.outcomes[i];
        if (!out.has_loss_curve) continue;
        if (out.status != JobStatus::Passed && out.status != JobStatus::Killed) continue;
        conv_inputs.push_back({out.status, &inputs.jobs[i].loss_curve, out.gpu_time});
    }
    const ConvergenceReport conv = convergence_report(conv_inputs, delta);
    for (const auto& [value, prob] : conv.passed_fraction_cdf) cv.passed_fraction_cdf.push_back({value, prob});
    for (const auto& [value, prob] : conv.killed_fraction_cdf) cv.killed_fraction_cdf.push_back({value, prob});
    cv.passed_gpu_time_share_past = conv.passed_gpu_time_share_past;
    cv.killed_gpu_time_share_past = conv.killed_gpu_time_share_past;
    if (conv.passed_jobs > 0) {
        int64_t within = 0;
        int64_t total = 0;
        for (const ConvergenceInput& in : conv_inputs) {
            if (in.status != JobStatus::Passed) continue;
            ++total;
            if (epochs_to_threshold(*in.loss_curve, delta) <= 0.45) ++within;
        }
        cv.passed_within_45pct = total > 0 ? static_cast<double>(within) / total : 0.0;
    }

    // --- failures -----------------------------------------------------------------
    FailureSection& fl = report.failures;
    const FailureStats stats = failure_stats(run.failure_records);
    fl.repetition_per_job = stats.repetition_per_job;
    fl.repetition_per_user = stats.repetition_per_user;
    for (const auto& [reason, rs] : stats.by_reason) {
        FailureReasonRow row;
        row.trials = rs.trials;
        row.jobs = rs.jobs;
        row.users = rs.users;
        row.rtf_p50 = rs.rtf_p50;
        row.rtf_p90 = rs.rtf_p90;
        row.rtf_p95 = rs.rtf_p95;
        row.rtf_share = rs.rtf_share;
        row.demand_1 = rs.demand_counts[0];
        row.demand_2_4 = rs.demand_counts[1];
        row.demand_gt4 = rs.demand_counts[2];
        row.rtf_demand_share = rs.rtf_demand_share;
        fl.by_reason[failure_reason_name(reason)] = row;
    }
    for (const FailureRecord& rec : run.failure_records) {
        if (rec.on_cluster) {
            ++fl.cluster_failures;
            fl.by_reason[failure_reason_name(rec.reason)].cluster_gpu_minutes_lost +=
                rec.rtf_minutes * rec.gpu_demand;
        } else {
            ++fl.pool_failures;
        }
    }
    return report;
}

// --- json --------------------------------------------------------------------

namespace {

json cdf_to_json(const Cdf& cdf) {
    json arr = json::array();
    for (const CdfPoint& p : cdf) {
        arr.push_back(json::array({p.value, p.probability}));
    }
    return arr;
}

Cdf cdf_from_json(const json& arr) {
    Cdf cdf;
    for (const auto& p : arr) {
        cdf.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    return cdf;
}

template <typename K, typename V>
json map_to_json(const std::map<K, V>& m, json (*conv)(const V&)) {
    json obj = json::object();
    for (const auto& [k, v] : m) {
        if constexpr (std::is_same_v<K, std::string>) {
            obj[k] = conv(v);
        } else {
            obj[std::to_string(k)] = conv(v);
        }
    }
    return obj;
}

} // namespace

json report_to_json(const MetricsReport& r) {
    json doc;
    doc["meta"] = {{"schema_version", r.meta.schema_version},
                   {"scenario", r.meta.scenario},
                   {"seed", r.meta.seed},
                   {"config_hash", r.meta.config_hash}};
    doc["status"] = {{"submitted", r.status.submitted},
                     {"passed", r.status.passed},
                     {"killed", r.status.killed},
                     {"unsuccessful", r.status.unsuccessful},
                     {"gpu_time_total", r.status.gpu_time_total},
                     {"gpu_time_share_passed", r.status.gpu_time_share_passed},
                     {"gpu_time_share_killed", r.status.gpu_time_share_killed},
                     {"gpu_time_share_unsuccessful", r.status.gpu_time_share_unsuccessful},
                     {"pool_gpu_time", r.status.pool_gpu_time}};

    json delay;
    json per_vc = json::object();
    for (const auto& [vc, buckets] : r.delay.queueing_delay_cdf) {
        json b = json::object();
        for (const auto& [bucket, cdf] : buckets) b[bucket] = cdf_to_json(cdf);
        per_vc[vc] = b;
    }
    delay["queueing_delay_cdf"] = per_vc;
    json by_bucket = json::object();
    for (const auto& [bucket, cdf] : r.delay.queueing_delay_by_bucket)
        by_bucket[bucket] = cdf_to_json(cdf);
    delay["queueing_delay_by_bucket"] = by_bucket;
    delay["fair_share_occurrences"] = r.delay.fair_share_occurrences;
    delay["fragmentation_occurrences"] = r.delay.fragmentation_occurrences;
    delay["fair_share_minutes"] = r.delay.fair_share_minutes;
    delay["fragmentation_minutes"] = r.delay.fragmentation_minutes;
    delay["ooo_fraction"] = r.delay.ooo_fraction;
    delay["ooo_harmless_fraction"] = r.delay.ooo_harmless_fraction;
    delay["bypassed_fraction"] = r.delay.bypassed_fraction;
    json by_stage = json::object();
    for (const auto& [stage, median] : r.delay.gt8_median_delay_by_stage)
        by_stage[std::to_string(stage)] = median;
    delay["gt8_median_delay_by_stage"] = by_stage;
    json stage_counts = json::object();
    for (const auto& [stage, count] : r.delay.gt8_jobs_by_stage)
        stage_counts[std::to_string(stage)] = count;
    delay["gt8_jobs_by_stage"] = stage_counts;
    delay["mean_queueing_delay"] = r.delay.mean_queueing_delay;
    doc["delay"] = delay;

    json util;
    json ub = json::object();
    for (const auto& [bucket, cdf] : r.utilization.cdf_by_bucket) ub[bucket] = cdf_to_json(cdf);
    util["cdf_by_bucket"] = ub;
    json us = json::object();
    for (const auto& [status, cdf] : r.utilization.cdf_by_status) us[status] = cdf_to_json(cdf);
    util["cdf_by_status"] = us;
    util["mean_by_bucket"] = r.utilization.mean_by_bucket;
    util["samples_by_bucket"] = r.utilization.samples_by_bucket;
    json spread_mean = json::object();
    for (const auto& [spread, mean] : r.utilization.mean_16gpu_by_spread)
        spread_mean[std::to_string(spread)] = mean;
    util["mean_16gpu_by_spread"] = spread_mean;
    json spread_n = json::object();
    for (const auto& [spread, n] : r.utilization.samples_16gpu_by_spread)
        spread_n[std::to_string(spread)] = n;
    util["samples_16gpu_by_spread"] = spread_n;
    doc["utilization"] = util;

    doc["placement"] = {{"placements", r.placement.placements},
                        {"ooo_placements", r.placement.ooo_placements},
                        {"colocated_placements", r.placement.colocated_placements},
                        {"mean_servers_by_bucket", r.placement.mean_servers_by_bucket},
                        {"mean_slowdown_by_bucket", r.placement.mean_slowdown_by_bucket}};

    doc["convergence"] = {{"delta", r.convergence.delta},
                          {"passed_fraction_cdf", cdf_to_json(r.convergence.passed_fraction_cdf)},
                          {"killed_fraction_cdf", cdf_to_json(r.convergence.killed_fraction_cdf)},
                          {"passed_gpu_time_share_past", r.convergence.passed_gpu_time_share_past},
                          {"killed_gpu_time_share_past", r.convergence.killed_gpu_time_share_past},
                          {"passed_within_45pct", r.convergence.passed_within_45pct}};

    json failures;
    json rows = json::object();
    for (const auto& [reason, row] : r.failures.by_reason) {
        rows[reason] = {{"trials", row.trials},
                        {"jobs", row.jobs},
                        {"users", row.users},
                        {"rtf_p50", row.rtf_p50},
                        {"rtf_p90", row.rtf_p90},
                        {"rtf_p95", row.rtf_p95},
                        {"rtf_share", row.rtf_share},
                        {"demand_1", row.demand_1},
                        {"demand_2_4", row.demand_2_4},
                        {"demand_gt4", row.demand_gt4},
                        {"rtf_demand_share", row.rtf_demand_share},
                        {"cluster_gpu_minutes_lost", row.cluster_gpu_minutes_lost}};
    }
    failures["by_reason"] = rows;
    failures["repetition_per_job"] = r.failures.repetition_per_job;
    failures["repetition_per_user"] = r.failures.repetition_per_user;
    failures["cluster_failures"] = r.failures.cluster_failures;
    failures["pool_failures"] = r.failures.pool_failures;
    doc["failures"] = failures;

    json snaps = json::array();
    for (const ClusterSnapshot& s : r.snapshots) {
        snaps.push_back(json::array({s.time, s.allocated_fraction, s.empty_server_fraction}));
    }
    doc["snapshots"] = snaps;
    return doc;
}

MetricsReport report_from_json(const json& doc) {
    MetricsReport r;
    const json& meta = doc.at("meta");
    r.meta.schema_version = meta.at("schema_version").get<std::string>();
    r.meta.scenario = meta.at("scenario").get<std::string>();
    r.meta.seed = meta.at("seed").get<uint64_t>();
    r.meta.config_hash = meta.at("config_hash").get<std::string>();

    const json& st = doc.at("status");
    r.status.submitted = st.at("submitted").get<int64_t>();
    r.status.passed = st.at("passed").get<int64_t>();
    r.status.killed = st.at("killed").get<int64_t>();
    r.status.unsuccessful = st.at("unsuccessful").get<int64_t>();
    r.status.gpu_time_total = st.at("gpu_time_total").get<double>();
    r.status.gpu_time_share_passed = st.at("gpu_time_share_passed").get<double>();
    r.status.gpu_time_share_killed = st.at("gpu_time_share_killed").get<double>();
    r.status.gpu_time_share_unsuccessful = st.at("gpu_time_share_unsuccessful").get<double>();
    r.status.pool_gpu_time = st.at("pool_gpu_time").get<double>();

    const json& dl = doc.at("delay");
    for (const auto& [vc, buckets] : dl.at("queueing_delay_cdf").items()) {
        for (const auto& [bucket, cdf] : buckets.items()) {
            r.delay.queueing_delay_cdf[vc][bucket] = cdf_from_json(cdf);
        }
    }
    for (const auto& [bucket, cdf] : dl.at("queueing_delay_by_bucket").items()) {
        r.delay.queueing_delay_by_bucket[bucket] = cdf_from_json(cdf);
    }
    r.delay.fair_share_occurrences =
        dl.at("fair_share_occurrences").get<std::map<std::string, int64_t>>();
    r.delay.fragmentation_occurrences =
        dl.at("fragmentation_occurrences").get<std::map<std::string, int64_t>>();
    r.delay.fair_share_minutes = dl.at("fair_share_minutes").get<double>();
    r.delay.fragmentation_minutes = dl.at("fragmentation_minutes").get<double>();
    r.delay.ooo_fraction = dl.at("ooo_fraction").get<double>();
    r.delay.ooo_harmless_fraction = dl.at("ooo_harmless_fraction").get<double>();
    r.delay.bypassed_fraction = dl.at("bypassed_fraction").get<std::map<std::string, double>>();
    for (const auto& [stage, median] : dl.at("gt8_median_delay_by_stage").items()) {
        r.delay.gt8_median_delay_by_stage[std::stoi(stage)] = median.get<double>();
    }
    for (const auto& [stage, count] : dl.at("gt8_jobs_by_stage").items()) {
        r.delay.gt8_jobs_by_stage[std::stoi(stage)] = count.get<int64_t>();
    }
    r.delay.mean_queueing_delay = dl.at("mean_queueing_delay").get<double>();

    const json& ut = doc.at("utilization");
    for (const auto& [bucket, cdf] : ut.at("cdf_by_bucket").items()) {
        r.utilization.cdf_by_bucket[bucket] = cdf_from_json(cdf);
    }
    for (const auto& [status, cdf] : ut.at("cdf_by_status").items()) {
        r.utilization.cdf_by_status[status] = cdf_from_json(cdf);
    }
    r.utilization.mean_by_bucket = ut.at("mean_by_bucket").get<std::map<std::string, double>>();
    r.utilization.samples_by_bucket = ut.at("samples_by_bucket").get<std::map<std::string, int64_t>>();
    for (const auto& [spread, mean] : ut.at("mean_16gpu_by_spread").items()) {
        r.utilization.mean_16gpu_by_spread[std::stoi(spread)] = mean.get<double>();
    }
    for (const auto& [spread, n] : ut.at("samples_16gpu_by_spread").items()) {
        r.utilization.samples_16gpu_by_spread[std::stoi(spread)] = n.get<int64_t>();
    }

    const json& pl = doc.at("placement");
    r.placement.placements = pl.at("placements").get<int64_t>();
    r.placement.ooo_placements = pl.at("ooo_placements").get<int64_t>();
    r.placement.colocated_placements = pl.at("colocated_placements").get<int64_t>();
    r.placement.mean_servers_by_bucket =
        pl.at("mean_servers_by_bucket").get<std::map<std::string, double>>();
    r.placement.mean_slowdown_by_bucket =
        pl.at("mean_slowdown_by_bucket").get<std::map<std::string, double>>();

    const json& cv = doc.at("convergence");
    r.convergence.delta = cv.at("delta").get<double>();
    r.convergence.passed_fraction_cdf = cdf_from_json(cv.at("passed_fraction_cdf"));
    r.convergence.killed_fraction_cdf = cdf_from_json(cv.at("killed_fraction_cdf"));
    r.convergence.passed_gpu_time_share_past = cv.at("passed_gpu_time_share_past").get<double>();
    r.convergence.killed_gpu_time_share_past = cv.at("killed_gpu_time_share_past").get<double>();
    r.convergence.passed_within_45pct = cv.at("passed_within_45pct").get<double>();

    const json& fl = doc.at("failures");
    for (const auto& [reason, row] : fl.at("by_reason").items()) {
        FailureReasonRow fr;
        fr.trials = row.at("trials").get<int64_t>();
        fr.jobs = row.at("jobs").get<int64_t>();
        fr.users = row.at("users").get<int64_t>();
        fr.rtf_p50 = row.at("rtf_p50").get<double>();
        fr.rtf_p90 = row.at("rtf_p90").get<double>();
        fr.rtf_p95 = row.at("rtf_p95").get<double>();
        fr.rtf_share = row.at("rtf_share").get<double>();
        fr.demand_1 = row.at("demand_1").get<int64_t>();
        fr.demand_2_4 = row.at("demand_2_4").get<int64_t>();
        fr.demand_gt4 = row.at("demand_gt4").get<int64_t>();
        fr.rtf_demand_share = row.at("rtf_demand_share").get<double>();
        fr.cluster_gpu_minutes_lost = row.at("cluster_gpu_minutes_lost").get<double>();
        r.failures.by_reason[reason] = fr;
    }
    r.failures.repetition_per_job = fl.at("repetition_per_job").get<double>();
    r.failures.repetition_per_user = fl.at("repetition_per_user").get<double>();
    r.failures.cluster_failures = fl.at("cluster_failures").get<int64_t>();
    r.failures.pool_failures = fl.at("pool_failures").get<int64_t>();

    for (const auto& s : doc.at("snapshots")) {
        r.snapshots.push_back({s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()});
    }
    return r;
}

// --- files ----------------------------------------------------------------------

namespace {

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << contents;
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

} // namespace

void write_report_files(const MetricsReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
    }
    const fs::path dir(out_dir);

    write_file(dir / "report.json", report_to_json(report).dump(2) + "\n");

    json manifest = {{"schema_version", report.meta.schema_version},
                     {"scenario", report.meta.scenario},
                     {"seed", report.meta.seed},
                     {"config_hash", report.meta.config_hash},
                     {"generator", "gpusim"}};
    write_file(dir / "run_manifest.json", manifest.dump(2) + "\n");

    std::string csv = "vc,bucket,delay_minutes,probability\n";
    for (const auto& [vc, buckets] : report.delay.queueing_delay_cdf) {
        for (const auto& [bucket, cdf] : buckets) {
            for (const CdfPoint& p : cdf) {
                csv += csv_escape(vc) + "," + csv_escape(bucket) + "," + std::to_string(p.value) +
                       "," + std::to_string(p.probability) + "\n";
            }
        }
    }
    write_file(dir / "queueing_delay_cdf.csv", csv);

    csv = "group,key,utilization_percent,probability\n";
    for (const auto& [bucket, cdf] : report.utilization.cdf_by_bucket) {
        for (const CdfPoint& p : cdf) {
            csv += "bucket," + csv_escape(bucket) + "," + std::to_string(p.value) + "," +
                   std::to_string(p.probability) + "\n";
        }
    }
    for (const auto& [status, cdf] : report.utilization.cdf_by_status) {
        for (const CdfPoint& p : cdf) {
            csv += "status," + csv_escape(status) + "," + std::to_string(p.value) + "," +
                   std::to_string(p.probability) + "\n";
        }
    }
    write_file(dir / "utilization_cdf.csv", csv);

    csv = "reason,trials,jobs,users,rtf_p50,rtf_p90,rtf_p95,rtf_share,demand_1,demand_2_4,demand_gt4,"
          "rtf_demand_share,cluster_gpu_minutes_lost\n";
    for (const auto& [reason, row] : report.failures.by_reason) {
        csv += csv_escape(reason) + "," + std::to_string(row.trials) + "," + std::to_string(row.jobs) +
               "," + std::to_string(row.users) + "," + std::to_string(row.rtf_p50) + "," +
               std::to_string(row.rtf_p90) + "," + std::to_string(row.rtf_p95) + "," +
               std::to_string(row.rtf_share) + "," + std::to_string(row.demand_1) + "," +
               std::to_string(row.demand_2_4) + "," + std::to_string(row.demand_gt4) + "," +
               std::to_string(row.rtf_demand_share) + "," +
               std::to_string(row.cluster_gpu_minutes_lost) + "\n";
    }
    write_file(dir / "failures.csv", csv);

    csv = "status,count,gpu_time_share\n";
    csv += "passed," + std::to_string(report.status.passed) + "," +
           std::to_string(report.status.gpu_time_share_passed) + "\n";
    csv += "killed," + std::to_string(report.status.killed) + "," +
           std::to_string(report.status.gpu_time_share_killed) + "\n";
    csv += "unsuccessful," + std::to_string(report.status.unsuccessful) + "," +
           std::to_string(report.status.gpu_time_share_unsuccessful) + "\n";
    write_file(dir / "status.csv", csv);

    csv = "status,epoch_fraction,probability\n";
    for (const CdfPoint& p : report.convergence.passed_fraction_cdf) {
        csv += "passed," + std::to_string(p.value) + "," + std::to_string(p.probability) + "\n";
    }
    for (const CdfPoint& p : report.convergence.killed_fraction_cdf) {
        csv += "killed," + std::to_string(p.value) + "," + std::to_string(p.probability) + "\n";
    }
    write_file(dir / "convergence.csv", csv);
}

void write_job_outcomes(const RunResult& run, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
    }
    std::string csv =
        "job_id,vc,user,gpu_demand,bucket,submit,first_start,finish,status,queueing_delay,"
        "total_wait,gpu_time,pool_time,executions,failures,preemptions,migrations,servers_used,"
        "racks_used,colocated,slowdown,placement_stage,constraint_stage,ooo_placed,bypassed\n";
    for (const JobOutcome& out : run.outcomes) {
        csv += out.job_id + "," + out.vc_id + "," + out.user_id + "," +
               std::to_string(out.gpu_demand) + "," + gpu_bucket_name(out.bucket) + "," +
               std::to_string(out.submit_time) + "," + std::to_string(out.first_start) + "," +
               std::to_string(out.finish_time) + "," + job_status_name(out.status) + "," +
               std::to_string(out.queueing_delay) + "," + std::to_string(out.total_wait) + "," +
               std::to_string(out.gpu_time) + "," + std::to_string(out.pool_time) + "," +
               std::to_string(out.executions) + "," + std::to_string(out.failures) + "," +
               std::to_string(out.preemptions) + "," + std::to_string(out.migrations) + "," +
               std::to_string(out.servers_used) + "," + std::to_string(out.racks_used) + "," +
               (out.colocated ? "1" : "0") + "," + std::to_string(out.slowdown) + "," +
               std::to_string(out.placement_stage) + "," + std::to_string(out.constraint_stage) +
               "," + (out.ooo_placed ? "1" : "0") + "," + (out.bypassed_by_ooo ? "1" : "0") + "\n";
    }
    write_file(fs::path(out_dir) / "jobs.csv", csv);
}

MetricsReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open report " + path);
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw SchemaMismatch("report " + path + " is not valid JSON");
    }
    try {
        return report_from_json(doc);
    } catch (const json::exception& e) {
        throw SchemaMismatch("report " + path + ": " + e.what());
    }
}

// --- diff -----------------------------------------------------------------------

namespace {

void flatten(const json& node, const std::string& path, std::map<std::string, double>& out) {
    if (node.is_number()) {
        out[path] = node.get<double>();
    } else if (node.is_object()) {
        for (const auto& [key, value] : node.items()) {
            flatten(value, path.empty() ? key : path + "." + key, out);
        }
    }
    // Arrays (CDF point lists, snapshots) are skipped: per-point deltas are noise.
}

} // namespace

DiffResult diff_reports(const MetricsReport& a, const MetricsReport& b) {
    if (a.meta.schema_version != b.meta.schema_version) {
        throw SchemaMismatch("report schema versions differ: " + a.meta.schema_version + " vs " +
                             b.meta.schema_version);
    }
    DiffResult result;
    result.paired = a.meta.seed == b.meta.seed;
    std::map<std::string, double> fa;
    std::map<std::string, double> fb;
    flatten(report_to_json(a), "", fa);
    flatten(report_to_json(b), "", fb);
    for (const auto& [path, va] : fa) {
        auto it = fb.find(path);
        if (it == fb.end()) continue;
        if (path == "meta.seed") continue;
        result.entries.push_back({path, va, it->second, it->second - va});
    }
    return result;
}

std::string format_diff(const DiffResult& diff, bool changed_only) {
    std::string out;
    out += diff.paired ? "paired comparison (same seed)\n"
                       : "non-paired comparison (different seeds)\n";
    for (const DiffEntry& e : diff.entries) {
        if (changed_only && e.delta == 0.0) continue;
        out += e.path + ": " + std::to_string(e.a) + " -> " + std::to_string(e.b) +
               " (delta " + std::to_string(e.delta) + ")\n";
    }
    return out;
}

std::string config_hash_hex(const json& canonical) {
    const std::string dump = canonical.dump();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace gpusim
