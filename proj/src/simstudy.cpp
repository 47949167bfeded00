#include "transport/simstudy.hpp"

#include "transport/errors.hpp"
#include "transport/parallel.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace transport {

std::string_view scenario_tag(Scenario s) {
    switch (s) {
        case Scenario::Restriction: return "restriction";
        case Scenario::StrictNull: return "strict_null";
        case Scenario::UncertainNull: return "uncertain_null";
        case Scenario::Accurate: return "accurate";
        case Scenario::Inaccurate: return "inaccurate";
        case Scenario::AccurateWithCovariance: return "accurate_with_covariance";
    }
    return "?";
}

std::optional<Scenario> parse_scenario(std::string_view tag) {
    for (Scenario s : {Scenario::Restriction, Scenario::StrictNull, Scenario::UncertainNull, Scenario::Accurate,
                       Scenario::Inaccurate, Scenario::AccurateWithCovariance}) {
        if (scenario_tag(s) == tag) return s;
    }
    return std::nullopt;
}

ShiftModel scenario_shift(Scenario s, const Eigen::Vector2d& center, const Eigen::Matrix2d& cov) {
    switch (s) {
        case Scenario::Restriction: throw std::invalid_argument("scenario_shift: restriction has no shift law");
        case Scenario::StrictNull: return ShiftModel::null();
        case Scenario::UncertainNull:
            return ShiftModel::independent(Trapezoid(-2, -1, 1, 2), Trapezoid(-2, -1, 1, 2));
        case Scenario::Accurate:
            return ShiftModel::independent(Normal(center(0), std::sqrt(cov(0, 0))),
                                           Normal(center(1), std::sqrt(cov(1, 1))));
        case Scenario::Inaccurate:
            return ShiftModel::independent(Normal(-center(0), std::sqrt(cov(0, 0))),
                                           Normal(-center(1), std::sqrt(cov(1, 1))));
        case Scenario::AccurateWithCovariance: return ShiftModel::bivariate(MultivariateNormal(center, cov));
    }
    throw std::logic_error("unknown scenario");
}

Metrics compute_metrics(std::span<const EffectEstimate> estimates, double truth) {
    if (estimates.empty()) throw EstimationError("compute_metrics: no estimates");
    Metrics m;
    for (const auto& e : estimates) {
        m.bias += e.rd - truth;
        m.cld += e.ci_upper - e.ci_lower;
        m.coverage += (e.ci_lower <= truth && truth <= e.ci_upper) ? 1.0 : 0.0;
    }
    const double n = double(estimates.size());
    m.bias /= n;
    m.cld /= n;
    m.coverage /= n;
    return m;
}

namespace {

struct RowKey {
    Method method;
    Scenario scenario;
};

constexpr std::array<Scenario, 5> kSynthesisScenarios{Scenario::StrictNull, Scenario::UncertainNull,
                                                      Scenario::Accurate, Scenario::Inaccurate,
                                                      Scenario::AccurateWithCovariance};

std::vector<RowKey> table_rows() {
    std::vector<RowKey> rows{{Method::RestrictPopulationGcomp, Scenario::Restriction},
                             {Method::RestrictPopulationIpw, Scenario::Restriction},
                             {Method::RestrictCovariatesGcomp, Scenario::Restriction},
                             {Method::RestrictCovariatesIpw, Scenario::Restriction}};
    for (Method m : {Method::SynthesisGcomp, Method::SynthesisIpw}) {
        for (Scenario s : kSynthesisScenarios) rows.push_back({m, s});
    }
    return rows;
}

bool needs_secret(Scenario s) {
    return s == Scenario::Accurate || s == Scenario::Inaccurate || s == Scenario::AccurateWithCovariance;
}

// Stream layout under each iteration's rng.
constexpr std::uint64_t kClinicStream = 1;
constexpr std::uint64_t kTrialStream = 2;
constexpr std::uint64_t kSecretStream = 3;
constexpr std::uint64_t kMonteCarloBase = 100;
constexpr std::uint64_t kTruthStream = ~std::uint64_t(0);

using IterationResult = std::vector<std::optional<EffectEstimate>>;

template <typename F>
std::optional<EffectEstimate> attempt(F&& f) {
    try {
        EffectEstimate e = f();
        e.draws.clear();
        e.draws.shrink_to_fit();
        return e;
    } catch (const EstimationError&) {
        return std::nullopt;
    }
}

IterationResult run_iteration(const ScenarioConfig& config, const SimulationOptions& options,
                              const std::vector<RowKey>& rows, const SeededRng& rng) {
    SeededRng clinic_rng = rng.stream(kClinicStream);
    SeededRng trial_rng = rng.stream(kTrialStream);
    const StudyDataset data =
        concat(generate_clinic(config, config.n_clinic, clinic_rng), generate_trial(config, config.n_trial, trial_rng));

    bool want_secret = false, want_g = false, want_ipw = false;
    for (const auto& r : rows) {
        want_secret |= needs_secret(r.scenario);
        want_g |= r.method == Method::SynthesisGcomp;
        want_ipw |= r.method == Method::SynthesisIpw;
    }
    std::optional<SecretTrialSummary> secret;
    if (want_secret) {
        SeededRng secret_rng = rng.stream(kSecretStream);
        try {
            secret = generate_secret_trial(config, config.n_secret, secret_rng);
        } catch (const EstimationError&) {
        }
    }
    std::optional<PreparedSynthesis> prep_g, prep_ipw;
    if (want_g) {
        try {
            prep_g = prepare_synthesis_gcomp(data, default_outcome_design());
        } catch (const EstimationError&) {
        }
    }
    if (want_ipw) {
        try {
            prep_ipw = prepare_synthesis_ipw(data, default_selection_design());
        } catch (const EstimationError&) {
        }
    }

    IterationResult out(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const RowKey& r = rows[k];
        switch (r.method) {
            case Method::RestrictPopulationGcomp:
                out[k] = attempt([&] { return restrict_population_gcomp(data, default_outcome_design()); });
                break;
            case Method::RestrictPopulationIpw:
                out[k] = attempt([&] { return restrict_population_ipw(data, default_selection_design()); });
                break;
            case Method::RestrictCovariatesGcomp:
                out[k] = attempt([&] { return restrict_covariates_gcomp(data, default_outcome_design()); });
                break;
            case Method::RestrictCovariatesIpw:
                out[k] = attempt([&] { return restrict_covariates_ipw(data, default_selection_design()); });
                break;
            case Method::SynthesisGcomp:
            case Method::SynthesisIpw: {
                const bool g = r.method == Method::SynthesisGcomp;
                const auto& prep = g ? prep_g : prep_ipw;
                if (!prep || (needs_secret(r.scenario) && !secret)) break;
                Eigen::Vector2d center = Eigen::Vector2d::Zero();
                Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
                if (secret) {
                    center = g ? secret->beta : secret->delta;
                    cov = g ? secret->beta_cov : secret->delta_cov;
                }
                const std::uint64_t stream =
                    kMonteCarloBase + 10 * std::uint64_t(r.method) + std::uint64_t(r.scenario);
                const MonteCarloSettings mc{options.mc_reps, rng.derive_seed(stream), 1};
                out[k] = attempt([&] { return run_synthesis(*prep, scenario_shift(r.scenario, center, cov), mc); });
                break;
            }
        }
    }
    return out;
}

}  // namespace

SimulationReport run_simulation(const ScenarioConfig& config, const SimulationOptions& options) {
    config.validate();
    if (options.iterations < 1) throw DataError("simulation: iterations must be at least 1");
    if (options.mc_reps < 1) throw DataError("simulation: mc_reps must be at least 1");

    std::vector<RowKey> rows = table_rows();
    if (options.only_scenario) {
        std::erase_if(rows, [&](const RowKey& r) { return r.scenario != *options.only_scenario; });
    }

    const SeededRng root(config.master_seed);
    SimulationReport report;
    if (options.truth) {
        report.truth = *options.truth;
    } else {
        SeededRng truth_rng = root.stream(kTruthStream);
        report.truth = true_psi(config, config.n_oracle, truth_rng);
    }

    const auto iterations = std::size_t(options.iterations);
    std::vector<IterationResult> results(iterations);
    parallel_for(iterations, options.workers, [&](std::size_t i) {
        results[i] = run_iteration(config, options, rows, root.stream(std::uint64_t(i)));
    });

    for (std::size_t k = 0; k < rows.size(); ++k) {
        std::vector<EffectEstimate> ok;
        for (const auto& it : results) {
            if (it[k]) ok.push_back(*it[k]);
        }
        SimulationResultRow row;
        row.method = std::string(method_tag(rows[k].method));
        row.scenario = rows[k].scenario;
        row.n_iterations = options.iterations;
        row.n_failed = options.iterations - Eigen::Index(ok.size());
        row.flagged = double(row.n_failed) > kFlagFailureFraction * double(options.iterations);
        if (!ok.empty()) {
            row.metrics = compute_metrics(ok, report.truth);
        } else {
            const double nan = std::nan("");
            row.metrics = {nan, nan, nan};
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string report_csv(const SimulationReport& report) {
    std::ostringstream os;
    os << "method,scenario,bias,cld,coverage,n_iterations,n_failed\n";
    char buf[160];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%lld,%lld\n", r.method.c_str(),
                      std::string(scenario_tag(r.scenario)).c_str(), r.metrics.bias, r.metrics.cld,
                      r.metrics.coverage, static_cast<long long>(r.n_iterations),
                      static_cast<long long>(r.n_failed));
        os << buf;
    }
    return os.str();
}

std::string report_text(const SimulationReport& report) {
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof buf, "truth psi = %.6f\n\n", report.truth);
    os << buf;
    std::snprintf(buf, sizeof buf, "%-18s %-26s %8s %8s %9s %7s\n", "method", "scenario", "bias", "CLD", "coverage",
                  "failed");
    os << buf << std::string(81, '-') << '\n';
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%-18s %-26s %8.3f %8.3f %8.1f%% %7lld%s\n", r.method.c_str(),
                      std::string(scenario_tag(r.scenario)).c_str(), r.metrics.bias, r.metrics.cld,
                      100.0 * r.metrics.coverage, static_cast<long long>(r.n_failed), r.flagged ? "  FLAGGED" : "");
        os << buf;
    }
    return os.str();
}

}  // namespace transport
