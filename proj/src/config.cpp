#include "gpusim/config.hpp"

#include <filesystem>
#include <fstream>

#include "gpusim/errors.hpp"

namespace gpusim {

using nlohmann::json;

namespace {

json load_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(std::string("cannot open ") + what + " " + path);
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError(std::string(what) + " " + path + " is not valid JSON");
    }
    return doc;
}

template <typename T>
T get_required(const json& obj, const char* key, const char* scope) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ConfigError(std::string(scope) + ": missing key '" + key + "'");
    }
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string(scope) + ": key '" + key + "' has the wrong type");
    }
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
    namespace fs = std::filesystem;
    fs::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (fs::path(base_dir) / p).string();
}

WorkloadParams parse_workload(const json& w) {
    WorkloadParams params;
    params.job_count = get_required<int>(w, "job_count", "workload");
    params.vc_arrival_weights =
        get_required<std::map<std::string, double>>(w, "vc_arrival_weights", "workload");
    const json& buckets = w.contains("buckets") ? w.at("buckets") : json::array();
    if (!buckets.is_array() || buckets.size() != static_cast<std::size_t>(kGpuBucketCount)) {
        throw ConfigError("workload: 'buckets' must list exactly " +
                          std::to_string(kGpuBucketCount) + " entries (1, 2-4, 5-8, >8)");
    }
    for (const json& b : buckets) {
        BucketParams bp;
        bp.share = get_required<double>(b, "share", "workload.buckets");
        for (const auto& [demand, weight] : get_required<std::map<std::string, double>>(
                 b, "demand_weights", "workload.buckets")) {
            bp.demand_weights[std::stoi(demand)] = weight;
        }
        bp.runtime_median = get_required<double>(b, "runtime_median", "workload.buckets");
        if (b.contains("vc_weights")) {
            bp.vc_weights = b.at("vc_weights").get<std::map<std::string, double>>();
        }
        params.buckets.push_back(std::move(bp));
    }
    params.runtime_sigma = w.value("runtime_sigma", params.runtime_sigma);
    params.max_duration_min = w.value("max_duration_min", params.max_duration_min);
    if (w.contains("tail")) {
        const json& t = w.at("tail");
        params.tail.probability = get_required<double>(t, "probability", "workload.tail");
        params.tail.pareto_xm = get_required<double>(t, "pareto_xm", "workload.tail");
        params.tail.pareto_alpha = get_required<double>(t, "pareto_alpha", "workload.tail");
    }
    params.killed_fraction = w.value("killed_fraction", params.killed_fraction);
    params.arrival_load = w.value("arrival_load", params.arrival_load);
    params.user_count = w.value("user_count", params.user_count);
    params.max_retries = w.value("max_retries", params.max_retries);
    if (w.contains("loss_curve")) {
        const json& lc = w.at("loss_curve");
        LossCurveParams& p = params.loss_curve;
        p.enabled = lc.value("enabled", p.enabled);
        p.amplitude = lc.value("amplitude", p.amplitude);
        p.plateau_early_share = lc.value("plateau_early_share", p.plateau_early_share);
        p.plateau_early_lo = lc.value("plateau_early_lo", p.plateau_early_lo);
        p.plateau_early_hi = lc.value("plateau_early_hi", p.plateau_early_hi);
        p.plateau_late_lo = lc.value("plateau_late_lo", p.plateau_late_lo);
        p.plateau_late_hi = lc.value("plateau_late_hi", p.plateau_late_hi);
        p.noise_sigma = lc.value("noise_sigma", p.noise_sigma);
        p.epochs_min = lc.value("epochs_min", p.epochs_min);
        p.epochs_max = lc.value("epochs_max", p.epochs_max);
    }
    return params;
}

SchedulerConfig parse_scheduler(const json& s) {
    SchedulerConfig cfg;
    cfg.acquisition_timeout_min = s.value("acquisition_timeout_min", cfg.acquisition_timeout_min);
    cfg.backoff_min = s.value("backoff_min", cfg.backoff_min);
    cfg.relax_after = s.value("relax_after", cfg.relax_after);
    cfg.preempt_threshold = s.value("preempt_threshold", cfg.preempt_threshold);
    cfg.checkpoint_interval_min = s.value("checkpoint_interval_min", cfg.checkpoint_interval_min);
    cfg.preempt_check_interval_min = s.value("preempt_check_interval_min", cfg.preempt_check_interval_min);
    cfg.migration_interval_min = s.value("migration_interval_min", cfg.migration_interval_min);
    cfg.migration_cost_min = s.value("migration_cost_min", cfg.migration_cost_min);
    const std::string policy = s.value("retry_policy", std::string("static"));
    if (policy == "static") {
        cfg.retry_policy = RetryPolicyKind::Static;
    } else if (policy == "adaptive") {
        cfg.retry_policy = RetryPolicyKind::Adaptive;
    } else {
        throw ConfigError("scheduler: key 'retry_policy' must be 'static' or 'adaptive'");
    }
    if (s.contains("scenario")) {
        const json& sc = s.at("scenario");
        cfg.wait_for_locality = sc.value("wait_for_locality", cfg.wait_for_locality);
        cfg.extra_wait_min = sc.value("extra_wait_min", cfg.extra_wait_min);
        cfg.migration = sc.value("migration", cfg.migration);
        cfg.dedicated_servers = sc.value("dedicated_servers", cfg.dedicated_servers);
        cfg.prerun_pool = sc.value("prerun_pool", cfg.prerun_pool);
        cfg.pool_gpus = sc.value("pool_gpus", cfg.pool_gpus);
        cfg.pool_window_min = sc.value("pool_window_min", cfg.pool_window_min);
    }
    cfg.ooo_harmless_analysis = s.value("ooo_harmless_analysis", cfg.ooo_harmless_analysis);
    cfg.ooo_harmless_max_decisions = s.value("ooo_harmless_max_decisions", cfg.ooo_harmless_max_decisions);
    if (cfg.acquisition_timeout_min <= 0) throw ConfigError("scheduler: acquisition_timeout_min must be > 0");
    if (cfg.backoff_min < 0) throw ConfigError("scheduler: backoff_min must be >= 0");
    if (cfg.relax_after < 1) throw ConfigError("scheduler: relax_after must be >= 1");
    if (cfg.preempt_threshold < 0 || cfg.preempt_threshold > 1.0001) {
        throw ConfigError("scheduler: preempt_threshold must lie in [0,1]");
    }
    if (cfg.pool_gpus < 1 && cfg.prerun_pool) throw ConfigError("scheduler: pool_gpus must be >= 1");
    return cfg;
}

std::map<int, double> parse_int_map(const json& obj, const char* scope) {
    std::map<int, double> out;
    if (!obj.is_object()) {
        throw ConfigError(std::string(scope) + " must be an object");
    }
    for (const auto& [key, value] : obj.items()) {
        out[std::stoi(key)] = value.get<double>();
    }
    return out;
}

} // namespace

SlowdownTable parse_calibration(const json& doc) {
    SlowdownTable table;
    if (doc.contains("placement_throughput")) {
        const json& p = doc.at("placement_throughput");
        table.same_server = get_required<double>(p, "same_server", "calibration.placement_throughput");
        table.diff_server = get_required<double>(p, "diff_server", "calibration.placement_throughput");
        table.intra_server = get_required<double>(p, "intra_server", "calibration.placement_throughput");
        table.inter_server = get_required<double>(p, "inter_server", "calibration.placement_throughput");
    }
    if (doc.contains("spread_throughput")) {
        const json& s = doc.at("spread_throughput");
        if (s.contains("dedicated")) table.spread_dedicated = parse_int_map(s.at("dedicated"), "calibration.spread_throughput.dedicated");
        if (s.contains("colocated")) table.spread_colocated = parse_int_map(s.at("colocated"), "calibration.spread_throughput.colocated");
    }
    if (doc.contains("size_utilization_mean")) {
        table.size_utilization = parse_int_map(doc.at("size_utilization_mean"), "calibration.size_utilization_mean");
    }
    if (doc.contains("spread_utilization_mean_16gpu")) {
        table.spread_utilization_16 =
            parse_int_map(doc.at("spread_utilization_mean_16gpu"), "calibration.spread_utilization_mean_16gpu");
    }
    table.utilization_sigma = doc.value("utilization_sigma", table.utilization_sigma);
    if (table.same_server <= 0) throw ConfigError("calibration: same_server throughput must be > 0");
    return table;
}

SlowdownTable load_calibration(const std::string& path) {
    return parse_calibration(load_json_file(path, "calibration file"));
}

ExperimentConfig parse_config(const json& doc, const std::string& base_dir) {
    ExperimentConfig config;
    config.base_dir = base_dir;
    config.config_hash = config_hash_hex(doc);

    if (!doc.contains("topology") || !doc.at("topology").contains("racks")) {
        throw ConfigError("missing key 'topology.racks'");
    }
    for (const json& r : doc.at("topology").at("racks")) {
        RackSpec spec;
        spec.servers = get_required<int>(r, "servers", "topology.racks");
        spec.gpus_per_server = get_required<int>(r, "gpus_per_server", "topology.racks");
        spec.cpu_cores = r.value("cpu_cores", 64);
        spec.mem_gb = r.value("mem_gb", 512);
        config.topology.push_back(spec);
    }

    for (const json& v : get_required<json>(doc, "virtual_clusters", "config")) {
        VirtualClusterSpec spec;
        spec.vc_id = get_required<std::string>(v, "vc", "virtual_clusters");
        spec.quota = get_required<int>(v, "quota", "virtual_clusters");
        config.vcs.push_back(spec);
    }
    if (config.vcs.empty()) {
        throw ConfigError("key 'virtual_clusters' lists no clusters");
    }

    const bool has_workload = doc.contains("workload");
    const bool has_trace = doc.contains("trace");
    if (has_workload == has_trace) {
        throw ConfigError("exactly one of 'workload' and 'trace' is required");
    }
    if (has_workload) {
        config.workload = parse_workload(doc.at("workload"));
    } else {
        config.trace_path = resolve_path(base_dir, doc.at("trace").get<std::string>());
    }

    config.sched = doc.contains("scheduler") ? parse_scheduler(doc.at("scheduler")) : SchedulerConfig{};

    if (doc.contains("calibration")) {
        config.calibration = load_calibration(resolve_path(base_dir, doc.at("calibration").get<std::string>()));
    }
    if (doc.contains("failure_profile")) {
        config.failure_profile_path = resolve_path(base_dir, doc.at("failure_profile").get<std::string>());
    }
    if (doc.contains("rules")) {
        config.rules_path = resolve_path(base_dir, doc.at("rules").get<std::string>());
    }
    if (doc.contains("failure_model")) {
        const json& f = doc.at("failure_model");
        FailureModelConfig& fm = config.failure_model;
        fm.enabled = f.value("enabled", fm.enabled);
        fm.base_failure_prob = f.value("base_failure_prob", fm.base_failure_prob);
        if (f.contains("bucket_multiplier")) {
            const json& bm = f.at("bucket_multiplier");
            if (!bm.is_array() || bm.size() != static_cast<std::size_t>(kGpuBucketCount)) {
                throw ConfigError("failure_model: 'bucket_multiplier' needs one entry per GPU bucket");
            }
            for (int i = 0; i < kGpuBucketCount; ++i) fm.bucket_multiplier[i] = bm.at(i).get<double>();
        }
        fm.doomed_fraction = f.value("doomed_fraction", fm.doomed_fraction);
        fm.refail_prob = f.value("refail_prob", fm.refail_prob);
        fm.user_stickiness = f.value("user_stickiness", fm.user_stickiness);
        fm.sticky_modes_per_user = f.value("sticky_modes_per_user", fm.sticky_modes_per_user);
    }

    if (doc.contains("seed")) {
        config.seed = doc.at("seed").get<uint64_t>();
    }
    if (doc.contains("report")) {
        config.convergence_delta = doc.at("report").value("convergence_delta", config.convergence_delta);
        config.fig4_warmup_min = doc.at("report").value("fig4_warmup_min", config.fig4_warmup_min);
    }
    config.snapshot_interval_min = doc.value("snapshot_interval_min", config.snapshot_interval_min);
    config.event_cap = doc.value("event_cap", config.event_cap);

    if (doc.contains("scenario_name")) {
        config.scenario_name = doc.at("scenario_name").get<std::string>();
    } else {
        const SchedulerConfig& s = config.sched;
        if (s.wait_for_locality) config.scenario_name = "wait_for_locality";
        else if (s.migration) config.scenario_name = "migration";
        else if (s.dedicated_servers) config.scenario_name = "dedicated_servers";
        else if (s.prerun_pool) config.scenario_name = "prerun_pool";
    }
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    const json doc = load_json_file(path, "config file");
    return parse_config(doc, std::filesystem::path(path).parent_path().string());
}

SimInputs resolve_inputs(const ExperimentConfig& config, std::optional<uint64_t> seed_override,
                         bool replay) {
    SimInputs inputs;
    if (seed_override) {
        inputs.seed = *seed_override;
    } else if (config.seed) {
        inputs.seed = *config.seed;
    } else {
        throw ConfigError("key 'seed' is required (config file or --seed)");
    }

    inputs.topo = build_topology(config.topology);
    inputs.vcs = config.vcs;
    inputs.sched = config.sched;
    inputs.calibration = config.calibration;
    inputs.failure_config = config.failure_model;
    if (!config.failure_profile_path.empty()) {
        inputs.failure_profile = FailureProfile::load(config.failure_profile_path);
    }
    inputs.snapshot_interval_min = config.snapshot_interval_min;
    inputs.event_cap = config.event_cap;
    inputs.replay = replay;

    if (config.workload) {
        WorkloadParams params = *config.workload;
        params.total_gpus = inputs.topo.total_gpus;
        inputs.jobs = generate_workload(params, inputs.seed);
    } else if (config.trace_path) {
        std::ifstream in(*config.trace_path);
        if (!in) {
            throw IoError("cannot open trace " + *config.trace_path);
        }
        inputs.jobs = parse_trace_strict(in);
    } else {
        throw ConfigError("no workload or trace configured");
    }
    return inputs;
}

} // namespace gpusim
