#include "transport/cli.hpp"

#include "transport/datagen.hpp"
#include "transport/errors.hpp"
#include "transport/estimators.hpp"
#include "transport/io.hpp"
#include "transport/simstudy.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace transport::cli {

namespace {

struct EstimateArgs {
    std::vector<std::string> methods;
    std::string data_path, trial_path, target_path, config_path;
    std::vector<std::string> outcome_design, selection_design;
    std::vector<std::string> strata{"W"};
    std::optional<std::int64_t> reps;
    std::optional<std::uint64_t> seed;
    unsigned workers = 0;
    std::string out_path, draws_path;
};

struct SimulateArgs {
    Eigen::Index iterations = 2000;
    std::int64_t reps = 5000;
    std::uint64_t seed = 7;
    unsigned workers = 0;
    std::string scenario;
    std::string out_path, text_path;
    Eigen::Index n_clinic = 1000, n_trial = 1000, n_secret = 2000, n_oracle = 10'000'000;
    std::optional<double> truth;
};

struct TruthArgs {
    Eigen::Index n = 10'000'000;
    std::uint64_t seed = kDefaultSeed;
};

struct GenerateArgs {
    Eigen::Index n_clinic = 1000, n_trial = 1000;
    std::uint64_t seed = kDefaultSeed;
    std::string out_path;
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << content;
    if (!f) throw DataError("failed writing " + path);
}

StudyDataset load_data(const EstimateArgs& a) {
    StudyDataset data;
    if (!a.data_path.empty()) {
        if (!a.trial_path.empty() || !a.target_path.empty()) {
            throw DataError("give either --data or --trial/--target, not both");
        }
        data = read_dataset_csv(a.data_path);
    } else {
        if (a.trial_path.empty() || a.target_path.empty()) {
            throw DataError("input data required: --data FILE, or both --trial FILE and --target FILE");
        }
        data = concat(read_dataset_csv(a.target_path, kTarget), read_dataset_csv(a.trial_path, kTrial));
    }
    data.validate();
    return data;
}

std::vector<Variable> parse_strata(const std::vector<std::string>& names) {
    std::vector<Variable> out;
    for (const auto& n : names) {
        auto v = parse_variable(n);
        if (!v || *v == Variable::R || *v == Variable::A || *v == Variable::Y) {
            throw DataError("--strata: '" + n + "' is not a covariate (use V and/or W)");
        }
        out.push_back(*v);
    }
    if (out.empty()) throw DataError("--strata: at least one variable is required");
    return out;
}

std::string draws_path_for(const std::string& base, const std::string& method, bool several) {
    if (!several) return base;
    std::filesystem::path p(base);
    return (p.parent_path() / (p.stem().string() + "_" + method + p.extension().string())).string();
}

int cmd_estimate(const EstimateArgs& a, std::ostream& out) {
    const StudyDataset data = load_data(a);

    std::optional<SynthesisConfig> config;
    if (!a.config_path.empty()) config = read_synthesis_config(a.config_path);

    DesignSpec outcome = default_outcome_design();
    DesignSpec selection = default_selection_design();
    if (config && config->outcome_design) outcome = *config->outcome_design;
    if (config && config->selection_design) selection = *config->selection_design;
    if (!a.outcome_design.empty()) outcome = DesignSpec::parse(a.outcome_design);
    if (!a.selection_design.empty()) selection = DesignSpec::parse(a.selection_design);

    std::size_t synthesis_count = 0;
    for (const auto& m : a.methods) synthesis_count += (m == "synth-g" || m == "synth-ipw");

    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    std::vector<std::pair<std::string, std::string>> draw_files;
    for (const auto& m : a.methods) {
        if (m == "bounds") {
            records.push_back(to_json(nonparametric_bounds(data, outcome)));
            continue;
        }
        if (m == "diagnose") {
            const auto strata = parse_strata(a.strata);
            records.push_back(to_json(positivity_diagnostic(data, strata), strata));
            continue;
        }
        const auto method = parse_method(m);
        if (!method) throw std::logic_error("unvalidated method " + m);
        EffectEstimate est;
        switch (*method) {
            case Method::RestrictPopulationGcomp: est = restrict_population_gcomp(data, outcome); break;
            case Method::RestrictPopulationIpw: est = restrict_population_ipw(data, selection); break;
            case Method::RestrictCovariatesGcomp: est = restrict_covariates_gcomp(data, outcome); break;
            case Method::RestrictCovariatesIpw: est = restrict_covariates_ipw(data, selection); break;
            case Method::SynthesisGcomp:
            case Method::SynthesisIpw: {
                if (!config) throw DataError(m + " requires --config with the simulation-model distributions");
                SynthesisSpec spec;
                spec.shift = config->shift;
                spec.mc_reps = a.reps.value_or(config->reps.value_or(10000));
                spec.master_seed = a.seed.value_or(config->seed.value_or(kDefaultSeed));
                spec.outcome_design = outcome;
                spec.selection_design = selection;
                spec.workers = a.workers;
                est = *method == Method::SynthesisGcomp ? synthesis_gcomp(data, spec) : synthesis_ipw(data, spec);
                if (!a.draws_path.empty()) {
                    std::ostringstream os;
                    write_draws_csv(os, est.draws);
                    draw_files.emplace_back(draws_path_for(a.draws_path, m, synthesis_count > 1), os.str());
                }
                break;
            }
        }
        records.push_back(to_json(est));
    }

    const std::string text = (records.size() == 1 ? records[0].dump(2) : records.dump(2)) + "\n";
    if (a.out_path.empty()) {
        out << text;
    } else {
        write_file(a.out_path, text);
    }
    for (const auto& [path, content] : draw_files) write_file(path, content);
    return kOk;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    ScenarioConfig config;
    config.n_clinic = a.n_clinic;
    config.n_trial = a.n_trial;
    config.n_secret = a.n_secret;
    config.n_oracle = a.n_oracle;
    config.master_seed = a.seed;
    SimulationOptions options;
    options.iterations = a.iterations;
    options.mc_reps = a.reps;
    options.workers = a.workers;
    options.truth = a.truth;
    if (!a.scenario.empty()) {
        options.only_scenario = parse_scenario(a.scenario);
        if (!options.only_scenario) throw DataError("unknown scenario '" + a.scenario + "'");
    }
    const SimulationReport report = run_simulation(config, options);
    const std::string csv = report_csv(report);
    const std::string text = report_text(report);
    if (!a.out_path.empty()) write_file(a.out_path, csv);
    if (!a.text_path.empty()) write_file(a.text_path, text);
    if (a.out_path.empty() && a.text_path.empty()) {
        out << text;
    } else if (a.out_path.empty()) {
        out << csv;
    }
    return kOk;
}

int cmd_truth(const TruthArgs& a, std::ostream& out) {
    SeededRng rng(a.seed);
    const double psi = true_psi(ScenarioConfig{}, a.n, rng);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f\n", psi);
    out << buf;
    return kOk;
}

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
    const ScenarioConfig config;
    const SeededRng root(a.seed);
    SeededRng clinic_rng = root.stream(1);
    SeededRng trial_rng = root.stream(2);
    const StudyDataset data =
        concat(generate_clinic(config, a.n_clinic, clinic_rng), generate_trial(config, a.n_trial, trial_rng));
    std::ostringstream os;
    write_dataset_csv(os, data);
    if (a.out_path.empty()) {
        out << os.str();
    } else {
        write_file(a.out_path, os.str());
    }
    return kOk;
}

const std::vector<std::string> kMethodChoices{"restrict-pop-g", "restrict-pop-ipw", "restrict-cov-g", "restrict-cov-ipw",
                                              "synth-g",        "synth-ipw",        "bounds",         "diagnose"};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Transport trial effects to a target population with positivity violations"};
    app.require_subcommand(1);

    EstimateArgs est;
    auto* estimate = app.add_subcommand("estimate", "Run estimators on trial and target data");
    estimate->add_option("-m,--method", est.methods, "Estimators (comma separated or repeated)")
        ->required()
        ->delimiter(',')
        ->check(CLI::IsMember(kMethodChoices));
    estimate->add_option("--data", est.data_path, "CSV with both populations (columns R,A,Y,V,W)");
    estimate->add_option("--trial", est.trial_path, "Trial CSV (R=2 inferred)");
    estimate->add_option("--target", est.target_path, "Target population CSV (R=1 inferred)");
    estimate->add_option("--config", est.config_path, "Synthesis JSON config");
    estimate->add_option("--outcome-design", est.outcome_design, "Outcome model terms, e.g. 1,A,V,V^2")
        ->delimiter(',');
    estimate->add_option("--selection-design", est.selection_design, "Selection model terms, e.g. 1,V,V^2")
        ->delimiter(',');
    estimate->add_option("--strata", est.strata, "Positivity strata for diagnose (default W)")->delimiter(',');
    estimate->add_option("--reps", est.reps, "Monte Carlo repetitions for synthesis (default 10000)")
        ->check(CLI::PositiveNumber);
    estimate->add_option("--seed", est.seed, "Master seed (default 20230101)");
    estimate->add_option("--workers", est.workers, "Worker threads, 0 = all cores");
    estimate->add_option("-o,--out", est.out_path, "JSON output file (default stdout)");
    estimate->add_option("--draws", est.draws_path, "Write synthesis draws to this CSV");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run the simulation experiment");
    simulate->add_option("--iterations", sim.iterations, "Simulated datasets (default 2000)")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--reps", sim.reps, "Monte Carlo repetitions per synthesis estimate (default 5000)")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim.seed, "Master seed (default 7)");
    simulate->add_option("--workers", sim.workers, "Worker threads, 0 = all cores");
    simulate->add_option("--scenario", sim.scenario,
                         "Only this scenario: restriction, strict_null, uncertain_null, accurate, inaccurate, "
                         "accurate_with_covariance");
    simulate->add_option("-o,--out", sim.out_path, "Report CSV path");
    simulate->add_option("--text", sim.text_path, "Report text table path");
    simulate->add_option("--n-clinic", sim.n_clinic, "Clinic sample size")->check(CLI::PositiveNumber);
    simulate->add_option("--n-trial", sim.n_trial, "Trial sample size")->check(CLI::PositiveNumber);
    simulate->add_option("--n-secret", sim.n_secret, "Secret trial sample size")->check(CLI::PositiveNumber);
    simulate->add_option("--n-oracle", sim.n_oracle, "Draws for the truth oracle")->check(CLI::PositiveNumber);
    simulate->add_option("--truth", sim.truth, "Use this true psi instead of running the oracle");

    TruthArgs truth;
    auto* truth_cmd = app.add_subcommand("truth", "Brute-force the true target-population risk difference");
    truth_cmd->add_option("-n,--n", truth.n, "Covariate draws (default 10000000)")->check(CLI::PositiveNumber);
    truth_cmd->add_option("--seed", truth.seed, "Seed (default 20230101)");

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Write one simulated clinic + trial dataset as CSV");
    generate->add_option("--n-clinic", gen.n_clinic, "Clinic rows")->check(CLI::PositiveNumber);
    generate->add_option("--n-trial", gen.n_trial, "Trial rows")->check(CLI::PositiveNumber);
    generate->add_option("--seed", gen.seed, "Seed (default 20230101)");
    generate->add_option("-o,--out", gen.out_path, "Output CSV (default stdout)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        // Help requests exit 0 and print the help of the subcommand they were given to.
        return app.exit(e, out, err) == 0 ? kOk : kUsage;
    }

    try {
        if (estimate->parsed()) return cmd_estimate(est, out);
        if (simulate->parsed()) return cmd_simulate(sim, out);
        if (truth_cmd->parsed()) return cmd_truth(truth, out);
        if (generate->parsed()) return cmd_generate(gen, out);
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const EstimationError& e) {
        err << "estimation failed: " << e.what() << "\n";
        return kEstimationFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kEstimationFailure;
    }
    return kUsage;
}

}  // namespace transport::cli
