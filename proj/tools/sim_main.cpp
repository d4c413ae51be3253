#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gpusim/config.hpp"
#include "gpusim/errors.hpp"
#include "gpusim/experiment.hpp"
#include "gpusim/failure.hpp"
#include "gpusim/log.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

void print_run_summary(const gpusim::ExperimentResult& result, const std::string& out_dir) {
    const gpusim::MetricsReport& r = result.report;
    std::cout << "scenario: " << r.meta.scenario << "  seed: " << r.meta.seed << "\n"
              << "jobs: " << r.status.submitted << "  passed: " << r.status.passed
              << "  killed: " << r.status.killed << "  unsuccessful: " << r.status.unsuccessful << "\n"
              << "gpu-time shares: passed " << r.status.gpu_time_share_passed << "%  killed "
              << r.status.gpu_time_share_killed << "%  unsuccessful "
              << r.status.gpu_time_share_unsuccessful << "%\n"
              << "placements: " << r.placement.placements << "  out-of-order: "
              << r.delay.ooo_fraction * 100.0 << "%  colocated: " << r.placement.colocated_placements
              << "\n"
              << "mean queueing delay: " << r.delay.mean_queueing_delay << " min\n";
    if (!out_dir.empty()) {
        std::cout << "report written to " << out_dir << "/report.json\n";
    }
}

int run_command(const std::string& config_path, std::optional<uint64_t> seed,
                const std::string& out_dir, const std::string& trace_override, bool replay) {
    gpusim::ExperimentConfig config = gpusim::load_config(config_path);
    if (!trace_override.empty()) {
        config.trace_path = trace_override;
        config.workload.reset();
    }
    if (replay && !config.trace_path) {
        throw gpusim::ConfigError("replay needs a trace (--trace or config key 'trace')");
    }
    gpusim::ExperimentResult result = gpusim::run_experiment(config, seed, out_dir, replay);
    print_run_summary(result, out_dir);
    return kExitOk;
}

int classify_command(const std::string& rules_path, const std::string& log_path) {
    const gpusim::LogClassifier classifier = gpusim::LogClassifier::load(rules_path);
    std::ifstream in(log_path);
    if (!in) {
        throw gpusim::IoError("cannot open log " + log_path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    const gpusim::Classification c = classifier.classify(buf.str());
    std::cout << "reason: " << gpusim::failure_reason_name(c.reason) << "\n"
              << "categories: " << gpusim::failure_categories_str(c.reason) << "\n"
              << "rule: " << (c.rule_id.empty() ? "-" : c.rule_id) << "\n";
    return kExitOk;
}

int diff_command(const std::string& path_a, const std::string& path_b, bool changed_only) {
    const gpusim::MetricsReport a = gpusim::read_report(path_a);
    const gpusim::MetricsReport b = gpusim::read_report(path_b);
    const gpusim::DiffResult diff = gpusim::diff_reports(a, b);
    std::cout << gpusim::format_diff(diff, changed_only);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trace-driven GPU cluster scheduling simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string trace_path;
    std::string rules_path;
    std::string log_path;
    std::string report_a;
    std::string report_b;
    std::optional<uint64_t> seed;
    bool changed_only = false;

    CLI::App* run = app.add_subcommand("run", "Run a simulation experiment");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--seed", seed, "Master seed (overrides the config)");
    run->add_option("--out", out_dir, "Output directory for report files");

    CLI::App* replay = app.add_subcommand("replay", "Replay a job trace");
    replay->add_option("--trace", trace_path, "Job trace (JSONL)")->required();
    replay->add_option("--config", config_path, "Experiment config (JSON)")->required();
    replay->add_option("--seed", seed, "Master seed (overrides the config)");
    replay->add_option("--out", out_dir, "Output directory for report files");

    CLI::App* classify = app.add_subcommand("classify", "Classify a failure log");
    classify->add_option("--rules", rules_path, "Signature rule file (JSONL)")->required();
    classify->add_option("--log", log_path, "Log file to classify")->required();

    CLI::App* diff = app.add_subcommand("diff", "Compare two reports");
    diff->add_option("report_a", report_a, "First report.json")->required();
    diff->add_option("report_b", report_b, "Second report.json")->required();
    diff->add_flag("--changed-only", changed_only, "Print only metrics that differ");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return run_command(config_path, seed, out_dir, "", false);
        }
        if (replay->parsed()) {
            return run_command(config_path, seed, out_dir, trace_path, true);
        }
        if (classify->parsed()) {
            return classify_command(rules_path, log_path);
        }
        if (diff->parsed()) {
            return diff_command(report_a, report_b, changed_only);
        }
    } catch (const gpusim::IoError& e) {
        std::cerr << e.what() << "\n";
        return kExitIo;
    } catch (const gpusim::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const gpusim::SchemaError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const gpusim::SchemaMismatch& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const gpusim::InvalidDistribution& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const gpusim::UnknownVC& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
