#include "gpusim/experiment.hpp"

#include <map>

#include "gpusim/log.hpp"

namespace gpusim {

double analyze_ooo_harmless(const SimInputs& inputs, const RunResult& run) {
    if (run.ooo_decisions.empty()) return -1.0;
    int harmless = 0;
    for (const OooDecisionTrace& decision : run.ooo_decisions) {
        SimInputs counterfactual = inputs;
        counterfactual.jobs.erase(counterfactual.jobs.begin() + decision.placed_job);
        const RunResult cf = run_simulation(counterfactual);
        std::map<std::string, double> cf_start;
        for (const JobOutcome& out : cf.outcomes) {
            cf_start[out.job_id] = out.first_start;
        }
        bool extended = false;
        for (int waiting : decision.waiting_jobs) {
            const JobOutcome& factual = run.outcomes[waiting];
            auto it = cf_start.find(factual.job_id);
            if (it == cf_start.end()) continue;
            if (it->second < 0.0) continue; // never started either way
            if (factual.first_start < 0.0 || factual.first_start > it->second + 1e-9) {
                extended = true;
                break;
            }
        }
        if (!extended) ++harmless;
    }
    return static_cast<double>(harmless) / static_cast<double>(run.ooo_decisions.size());
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::optional<uint64_t> seed_override,
                                const std::string& out_dir, bool replay) {
    ExperimentResult result;
    result.inputs = resolve_inputs(config, seed_override, replay);
    log::info("running scenario '" + config.scenario_name + "' with " +
              std::to_string(result.inputs.jobs.size()) + " jobs, seed " +
              std::to_string(result.inputs.seed));
    result.run = run_simulation(result.inputs);

    ReportMeta meta;
    meta.scenario = config.scenario_name;
    meta.seed = result.inputs.seed;
    meta.config_hash = config.config_hash;
    ReportOptions options;
    options.convergence_delta = config.convergence_delta;
    options.fig4_warmup_min = config.fig4_warmup_min;
    result.report = build_report(result.inputs, result.run, meta, options);

    if (config.sched.ooo_harmless_analysis) {
        result.report.delay.ooo_harmless_fraction = analyze_ooo_harmless(result.inputs, result.run);
    }

    if (!out_dir.empty()) {
        write_report_files(result.report, out_dir);
        write_job_outcomes(result.run, out_dir);
    }
    return result;
}

} // namespace gpusim
