#pragma once
// Transport estimators for the target-population risk difference
//   psi = E[Y^1 | R=1] - E[Y^0 | R=1]
// when the trial (R=2) contains no women (W=1) but the target (R=1) does.
//
// Restriction estimators (M-estimation, Wald intervals):
//   restrict_population_*  estimate the effect among target men only;
//   restrict_covariates_*  drop W from the adjustment set.
// Synthesis estimators (Monte Carlo, percentile intervals) combine a fitted
// statistical model for men with an externally specified shift for women,
//   expit(stat(a, V) + b0 * W + b1 * a * W).

#include "transport/dataset.hpp"
#include "transport/dists.hpp"
#include "transport/glm.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace transport {

enum class Method {
    RestrictPopulationGcomp,
    RestrictPopulationIpw,
    RestrictCovariatesGcomp,
    RestrictCovariatesIpw,
    SynthesisGcomp,
    SynthesisIpw,
};

std::string_view method_tag(Method m);
std::optional<Method> parse_method(std::string_view tag);

struct EffectEstimate {
    std::string method;
    double rd = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double risk1 = 0.0;
    double risk0 = 0.0;
    std::optional<double> se;   // M-estimation methods
    std::vector<double> draws;  // synthesis methods: Monte Carlo risk differences
    std::size_t n_failed_draws = 0;

    // M-estimation methods: the full stacked parameter vector and its sandwich covariance.
    Eigen::VectorXd parameters;
    Eigen::MatrixXd covariance;
};

inline constexpr double kWaldZ = 1.96;

// Nuisance-model designs used by the simulation experiment.
DesignSpec default_outcome_design();    // 1, A, V
DesignSpec default_selection_design();  // 1, V, V*I(V>25)

EffectEstimate restrict_population_gcomp(const StudyDataset& data, const DesignSpec& outcome_design);
EffectEstimate restrict_population_ipw(const StudyDataset& data, const DesignSpec& selection_design);
EffectEstimate restrict_covariates_gcomp(const StudyDataset& data, const DesignSpec& outcome_design);
EffectEstimate restrict_covariates_ipw(const StudyDataset& data, const DesignSpec& selection_design);

// Distribution of the simulation-model shift (b0, b1): either two independent
// laws or one bivariate normal.
struct ShiftModel {
    std::optional<ParameterDistribution> b0;
    std::optional<ParameterDistribution> b1;
    std::optional<MultivariateNormal> joint;

    static ShiftModel independent(ParameterDistribution b0, ParameterDistribution b1);
    static ShiftModel bivariate(MultivariateNormal joint);
    static ShiftModel null() { return independent(PointMass{0.0}, PointMass{0.0}); }

    void validate() const;
    Eigen::Vector2d draw(SeededRng& rng) const;
};

struct SynthesisSpec {
    ShiftModel shift = ShiftModel::null();
    std::int64_t mc_reps = 5000;
    std::uint64_t master_seed = 20230101;
    DesignSpec outcome_design = default_outcome_design();      // g-computation s(a, V, W=0)
    DesignSpec selection_design = default_selection_design();  // IPW selection nuisance model
    unsigned workers = 1;

    void validate() const;
};

// Fitted statistical part of a synthesis estimator, reusable across shift models.
// Target rows are compressed to their distinct covariate patterns.
struct PreparedSynthesis {
    std::string method;
    MultivariateNormal statistical;  // sampling law of the statistical-model parameters
    Eigen::MatrixXd pattern_x0;      // statistical design row with a = 0, one row per pattern
    Eigen::MatrixXd pattern_x1;      // ... with a = 1
    Eigen::VectorXd pattern_w;
    std::vector<Eigen::Index> row_pattern;  // target row -> pattern
};

PreparedSynthesis prepare_synthesis_gcomp(const StudyDataset& data, const DesignSpec& outcome_design);
PreparedSynthesis prepare_synthesis_ipw(const StudyDataset& data, const DesignSpec& selection_design);

struct MonteCarloSettings {
    std::int64_t reps = 5000;
    std::uint64_t master_seed = 20230101;
    unsigned workers = 1;
};

EffectEstimate run_synthesis(const PreparedSynthesis& prepared, const ShiftModel& shift,
                             const MonteCarloSettings& settings);

// Mean over target rows of expit(stat1 + b0 W + b1 W) - expit(stat0 + b0 W) for one
// fixed parameter set, without resampling. Also returns the per-arm risks.
struct SynthesisPoint {
    double rd, risk1, risk0;
};
SynthesisPoint synthesis_point(const PreparedSynthesis& prepared, const Eigen::VectorXd& statistical_params,
                               const Eigen::Vector2d& shift);

EffectEstimate synthesis_gcomp(const StudyDataset& data, const SynthesisSpec& spec);
EffectEstimate synthesis_ipw(const StudyDataset& data, const SynthesisSpec& spec);

struct Bounds {
    double lower;
    double upper;
};

// Women in the target get f1 = 0, f0 = 1 (lower) or f1 = 1, f0 = 0 (upper); men use
// the outcome model fitted on trial men.
Bounds nonparametric_bounds(const StudyDataset& data, const DesignSpec& outcome_design);

struct StratumCount {
    std::vector<std::pair<Variable, double>> stratum;
    Eigen::Index target_count = 0;
    Eigen::Index trial_count = 0;
};

// Target strata (distinct combinations of `strata`) with no trial observations,
// in ascending lexicographic order. Empty means deterministic positivity holds at
// the level of observed strata.
std::vector<StratumCount> positivity_diagnostic(const StudyDataset& data, const std::vector<Variable>& strata);

struct DrawSummary {
    double point, lower, upper;
};

// Linear interpolation between order statistics at position q * (n - 1).
double percentile(std::span<const double> sorted, double q);
// Median with 2.5th / 97.5th percentiles. Throws EstimationError on empty input.
DrawSummary summarize_draws(std::span<const double> draws);

// Hajek mean sum(w y) / sum(w).
double hajek_mean(const Eigen::ArrayXd& y, const Eigen::ArrayXd& weights);

// Transport weights for trial rows: odds of target membership given the selection
// design, times 1 / Pr(A = a). Zero for non-trial rows.
Eigen::ArrayXd transport_weights(const StudyDataset& data, const FittedLogistic& selection, double treat_prob);

}  // namespace transport
