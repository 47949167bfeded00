#pragma once
// Monte Carlo evaluation of all estimators against the known truth:
// bias, confidence limit difference (CLD) and 95% interval coverage.

#include "transport/datagen.hpp"
#include "transport/estimators.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace transport {

enum class Scenario { Restriction, StrictNull, UncertainNull, Accurate, Inaccurate, AccurateWithCovariance };

std::string_view scenario_tag(Scenario s);
std::optional<Scenario> parse_scenario(std::string_view tag);

// Shift-parameter law for a synthesis scenario given the secret-trial fit
// (`center`, `cov` are beta for g-computation, delta for IPW).
ShiftModel scenario_shift(Scenario s, const Eigen::Vector2d& center, const Eigen::Matrix2d& cov);

struct Metrics {
    double bias = 0.0;      // mean(rd - truth)
    double cld = 0.0;       // mean(ci_upper - ci_lower)
    double coverage = 0.0;  // share of intervals with ci_lower <= truth <= ci_upper
};

// Throws EstimationError on an empty list.
Metrics compute_metrics(std::span<const EffectEstimate> estimates, double truth);

struct SimulationResultRow {
    std::string method;
    Scenario scenario = Scenario::Restriction;
    Metrics metrics;
    Eigen::Index n_iterations = 0;
    Eigen::Index n_failed = 0;
    bool flagged = false;  // more than 5% of iterations failed
};

struct SimulationOptions {
    Eigen::Index iterations = 2000;
    std::int64_t mc_reps = 5000;
    unsigned workers = 0;                   // 0: all hardware threads
    std::optional<Scenario> only_scenario;  // restrict the report to one scenario
    std::optional<double> truth;            // skip the oracle and use this value
};

struct SimulationReport {
    double truth = 0.0;
    std::vector<SimulationResultRow> rows;  // restriction rows, then synth-g and synth-ipw by scenario
};

SimulationReport run_simulation(const ScenarioConfig& config, const SimulationOptions& options);

inline constexpr double kFlagFailureFraction = 0.05;

std::string report_csv(const SimulationReport& report);
std::string report_text(const SimulationReport& report);

}  // namespace transport
