#include "transport/estimators.hpp"

#include "transport/errors.hpp"
#include "transport/mest.hpp"
#include "transport/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace transport {

std::string_view method_tag(Method m) {
    switch (m) {
        case Method::RestrictPopulationGcomp: return "restrict-pop-g";
        case Method::RestrictPopulationIpw: return "restrict-pop-ipw";
        case Method::RestrictCovariatesGcomp: return "restrict-cov-g";
        case Method::RestrictCovariatesIpw: return "restrict-cov-ipw";
        case Method::SynthesisGcomp: return "synth-g";
        case Method::SynthesisIpw: return "synth-ipw";
    }
    return "?";
}

std::optional<Method> parse_method(std::string_view tag) {
    for (Method m : {Method::RestrictPopulationGcomp, Method::RestrictPopulationIpw, Method::RestrictCovariatesGcomp,
                     Method::RestrictCovariatesIpw, Method::SynthesisGcomp, Method::SynthesisIpw}) {
        if (method_tag(m) == tag) return m;
    }
    return std::nullopt;
}

DesignSpec default_outcome_design() { return DesignSpec::parse({"1", "A", "V"}); }
DesignSpec default_selection_design() { return DesignSpec::parse({"1", "V", "V*I(V>25)"}); }

namespace {

Eigen::ArrayXd masked(const Eigen::VectorXd& column, const Eigen::ArrayXd& mask) {
    return (mask != 0.0).select(column.array(), Eigen::ArrayXd::Zero(column.size()));
}

Eigen::VectorXd filtered(const Eigen::ArrayXd& values, const Eigen::ArrayXd& mask) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (mask(i) != 0.0) out.push_back(values(i));
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(), Eigen::Index(out.size()));
}

EffectEstimate wald_estimate(Method method, const MEstimate<double>& est, Eigen::Index risk0_index) {
    EffectEstimate out;
    out.method = std::string(method_tag(method));
    out.risk0 = est.theta_hat(risk0_index);
    out.risk1 = est.theta_hat(risk0_index + 1);
    out.rd = out.risk1 - out.risk0;
    const double se = est.std_error(risk0_index + 2);
    if (!std::isfinite(se)) throw EstimationError(out.method + ": non-finite standard error");
    out.se = se;
    out.ci_lower = out.rd - kWaldZ * se;
    out.ci_upper = out.rd + kWaldZ * se;
    out.parameters = est.theta_hat;
    out.covariance = est.covariance;
    return out;
}

// ---- g-computation stack -------------------------------------------------

struct GcompStack {
    Eigen::MatrixXd x_obs;  // outcome design with observed A, trial rows only
    Eigen::MatrixXd x0;     // A = 0, target rows only
    Eigen::MatrixXd x1;     // A = 1, target rows only
    Eigen::ArrayXd y;
    Eigen::ArrayXd trial;
    Eigen::ArrayXd target;
};

Eigen::MatrixXd gcomp_contributions(const GcompStack& d, const Eigen::VectorXd& theta) {
    const Eigen::Index p = d.x_obs.cols();
    const Eigen::VectorXd alpha = theta.head(p);
    const double t0 = theta(p), t1 = theta(p + 1), t2 = theta(p + 2);
    Eigen::MatrixXd phi(d.y.size(), p + 3);
    phi.leftCols(p) = logistic_score(d.x_obs, d.y, d.trial, alpha);
    phi.col(p) = (d.target * (expit((d.x0 * alpha).array()) - t0)).matrix();
    phi.col(p + 1) = (d.target * (expit((d.x1 * alpha).array()) - t1)).matrix();
    phi.col(p + 2).setConstant((t1 - t0) - t2);
    return phi;
}

EffectEstimate gcomp_restricted(Method method, const StudyDataset& data, const DesignSpec& design,
                                const Eigen::ArrayXd& trial_mask, const Eigen::ArrayXd& target_mask) {
    const std::string tag(method_tag(method));
    if (target_mask.sum() == 0.0) {
        throw EstimationError(method == Method::RestrictPopulationGcomp ? tag + ": no target rows with W=0"
                                                                        : tag + ": no target rows");
    }
    if (trial_mask.sum() == 0.0) throw EstimationError(tag + ": no trial rows to fit the outcome model");

    GcompStack stack;
    stack.trial = trial_mask;
    stack.target = target_mask;
    stack.y = masked(data.Y, trial_mask);
    stack.x_obs = zero_masked_rows(design_matrix(design, data), trial_mask);
    stack.x0 = zero_masked_rows(design_matrix(design, data, {{Variable::A, 0.0}}), target_mask);
    stack.x1 = zero_masked_rows(design_matrix(design, data, {{Variable::A, 1.0}}), target_mask);
    if (!stack.x0.allFinite() || !stack.x1.allFinite()) {
        throw DataError(tag + ": outcome design needs a variable that is missing for target rows");
    }

    // Constant trial outcomes: every prediction is that constant, with no
    // sampling variability. The logistic MLE itself does not exist.
    const Eigen::VectorXd trial_y = filtered(data.Y.array(), trial_mask);
    if (trial_y.minCoeff() == trial_y.maxCoeff()) {
        EffectEstimate out;
        out.method = tag;
        out.risk0 = out.risk1 = trial_y(0);
        out.se = 0.0;
        out.parameters = Eigen::Vector3d(out.risk0, out.risk1, 0.0);
        out.covariance = Eigen::Matrix3d::Zero();
        return out;
    }

    // Sequential fit gives the starting point; the stacked solve then only
    // refines it and supplies the joint sandwich.
    const FittedLogistic outcome = fit_logistic(design, data.filter(trial_mask), Variable::Y);
    const Eigen::Index p = design.width();
    const double n_target = target_mask.sum();
    Eigen::VectorXd init(p + 3);
    init.head(p) = outcome.coefficients;
    init(p) = (target_mask * expit((stack.x0 * outcome.coefficients).array())).sum() / n_target;
    init(p + 1) = (target_mask * expit((stack.x1 * outcome.coefficients).array())).sum() / n_target;
    init(p + 2) = init(p + 1) - init(p);

    EstimatingFunction<GcompStack> ef{p + 3, gcomp_contributions};
    SolverOptions<double> options;
    options.on_step = separation_guard(stack.x_obs, stack.y, stack.trial);
    return wald_estimate(method, estimate(ef, stack, init, options), p);
}

// ---- inverse probability weighting stack --------------------------------

struct IpwStack {
    Eigen::MatrixXd l_sel;    // selection design, selection-model rows only
    Eigen::MatrixXd l_trial;  // selection design, trial rows only
    Eigen::ArrayXd a, y;
    Eigen::ArrayXd in_target;  // I(R = 1)
    Eigen::ArrayXd trial;
    Eigen::ArrayXd sel;
};

Eigen::MatrixXd ipw_contributions(const IpwStack& d, const Eigen::VectorXd& theta) {
    const Eigen::Index q = d.l_sel.cols();
    const double pi = expit(theta(0));
    const Eigen::VectorXd sigma = theta.segment(1, q);
    const double t0 = theta(q + 1), t1 = theta(q + 2), t2 = theta(q + 3);
    const Eigen::ArrayXd odds = d.trial * (d.l_trial * sigma).array().exp();
    Eigen::MatrixXd phi(d.y.size(), q + 4);
    phi.col(0) = (d.trial * (d.a - pi)).matrix();
    phi.middleCols(1, q) = logistic_score(d.l_sel, d.in_target, d.sel, sigma);
    phi.col(q + 1) = ((d.y - t0) * odds * (1.0 - d.a) / (1.0 - pi)).matrix();
    phi.col(q + 2) = ((d.y - t1) * odds * d.a / pi).matrix();
    phi.col(q + 3).setConstant((t1 - t0) - t2);
    return phi;
}

void check_selection_probabilities(const std::string& tag, const Eigen::MatrixXd& l_trial,
                                   const Eigen::ArrayXd& trial, const Eigen::VectorXd& sigma) {
    const Eigen::ArrayXd eta = (l_trial * sigma).array();
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        if (trial(i) == 0.0) continue;
        if (!std::isfinite(std::exp(eta(i))) || expit(eta(i)) >= 1.0) {
            throw EstimationError(tag + ": estimated probability of target membership is 1 for trial row " +
                                  std::to_string(i + 1) + " (infinite inverse-odds weight)");
        }
    }
}

double treatment_probability(const std::string& tag, const Eigen::ArrayXd& a, const Eigen::ArrayXd& trial) {
    const double pi = (a * trial).sum() / trial.sum();
    if (!(pi > 0.0 && pi < 1.0)) throw EstimationError(tag + ": trial has only one treatment arm");
    return pi;
}

IpwStack make_ipw_stack(const StudyDataset& data, const DesignSpec& selection_design, const Eigen::ArrayXd& trial_mask,
                        const Eigen::ArrayXd& selection_mask) {
    IpwStack s;
    s.trial = trial_mask;
    s.sel = selection_mask;
    s.a = masked(data.A, trial_mask);
    s.y = masked(data.Y, trial_mask);
    s.in_target = data.target_mask();
    const Eigen::MatrixXd l = design_matrix(selection_design, data);
    if (!zero_masked_rows(l, (selection_mask + trial_mask).min(1.0)).allFinite()) {
        throw DataError("selection design needs a variable that is missing");
    }
    s.l_sel = zero_masked_rows(l, selection_mask);
    s.l_trial = zero_masked_rows(l, trial_mask);
    return s;
}

FittedLogistic fit_selection(const StudyDataset& data, const DesignSpec& selection_design,
                             const Eigen::ArrayXd& selection_mask) {
    const StudyDataset rows = data.filter(selection_mask);
    return fit_logistic(selection_design, rows, rows.target_mask().matrix());
}

EffectEstimate ipw_restricted(Method method, const StudyDataset& data, const DesignSpec& selection_design,
                              const Eigen::ArrayXd& trial_mask, const Eigen::ArrayXd& selection_mask) {
    const std::string tag(method_tag(method));
    if (trial_mask.sum() == 0.0) throw EstimationError(tag + ": no trial rows");
    if ((selection_mask * data.target_mask()).sum() == 0.0) {
        throw EstimationError(tag + (method == Method::RestrictPopulationIpw ? ": no target rows with W=0"
                                                                             : ": no target rows"));
    }
    IpwStack stack = make_ipw_stack(data, selection_design, trial_mask, selection_mask);
    const double pi = treatment_probability(tag, stack.a, stack.trial);
    const FittedLogistic selection = fit_selection(data, selection_design, selection_mask);
    check_selection_probabilities(tag, stack.l_trial, stack.trial, selection.coefficients);

    const Eigen::Index q = selection_design.width();
    const Eigen::ArrayXd odds = stack.trial * (stack.l_trial * selection.coefficients).array().exp();
    Eigen::VectorXd init(q + 4);
    init(0) = logit(pi);
    init.segment(1, q) = selection.coefficients;
    init(q + 1) = hajek_mean(stack.y, odds * (1.0 - stack.a) / (1.0 - pi));
    init(q + 2) = hajek_mean(stack.y, odds * stack.a / pi);
    init(q + 3) = init(q + 2) - init(q + 1);

    EstimatingFunction<IpwStack> ef{q + 4, ipw_contributions};
    SolverOptions<double> options;
    options.on_step = separation_guard(stack.l_sel, stack.in_target, stack.sel, 1);
    const auto est = estimate(ef, stack, init, options);
    check_selection_probabilities(tag, stack.l_trial, stack.trial, est.theta_hat.segment(1, q));
    return wald_estimate(method, est, q + 1);
}

// ---- synthesis IPW stack: treatment, selection, weighted MSM ----------

struct MsmStack {
    IpwStack base;
    Eigen::MatrixXd m;  // (1, A) on trial rows
};

Eigen::MatrixXd msm_contributions(const MsmStack& d, const Eigen::VectorXd& theta) {
    const IpwStack& b = d.base;
    const Eigen::Index q = b.l_sel.cols();
    const double pi = expit(theta(0));
    const Eigen::VectorXd sigma = theta.segment(1, q);
    const Eigen::VectorXd gamma = theta.segment(q + 1, 2);
    const Eigen::ArrayXd odds = b.trial * (b.l_trial * sigma).array().exp();
    const Eigen::ArrayXd weight = odds * (b.a / pi + (1.0 - b.a) / (1.0 - pi));
    Eigen::MatrixXd phi(b.y.size(), q + 3);
    phi.col(0) = (b.trial * (b.a - pi)).matrix();
    phi.middleCols(1, q) = logistic_score(b.l_sel, b.in_target, b.sel, sigma);
    phi.rightCols(2) = logistic_score(d.m, b.y, weight, gamma);
    return phi;
}

// ---- pattern compression for synthesis -------------------------------------

PreparedSynthesis compress_patterns(std::string method, MultivariateNormal statistical, const Eigen::MatrixXd& x0,
                                    const Eigen::MatrixXd& x1, const Eigen::VectorXd& w) {
    std::map<std::vector<double>, Eigen::Index> index;
    std::vector<Eigen::Index> row_pattern(std::size_t(w.size()));
    std::vector<Eigen::Index> first_rows;
    const Eigen::Index p = x0.cols();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        std::vector<double> key(std::size_t(2 * p + 1));
        for (Eigen::Index j = 0; j < p; ++j) {
            key[std::size_t(j)] = x0(i, j);
            key[std::size_t(p + j)] = x1(i, j);
        }
        key.back() = w(i);
        auto [it, inserted] = index.emplace(std::move(key), Eigen::Index(first_rows.size()));
        if (inserted) first_rows.push_back(i);
        row_pattern[std::size_t(i)] = it->second;
    }
    return PreparedSynthesis{std::move(method), std::move(statistical), x0(first_rows, Eigen::all),
                             x1(first_rows, Eigen::all), w(first_rows), std::move(row_pattern)};
}

}  // namespace

EffectEstimate restrict_population_gcomp(const StudyDataset& data, const DesignSpec& outcome_design) {
    const Eigen::ArrayXd male = data.male_mask();
    return gcomp_restricted(Method::RestrictPopulationGcomp, data, outcome_design, data.trial_mask() * male,
                            data.target_mask() * male);
}

EffectEstimate restrict_covariates_gcomp(const StudyDataset& data, const DesignSpec& outcome_design) {
    return gcomp_restricted(Method::RestrictCovariatesGcomp, data, outcome_design, data.trial_mask(),
                            data.target_mask());
}

EffectEstimate restrict_population_ipw(const StudyDataset& data, const DesignSpec& selection_design) {
    const Eigen::ArrayXd male = data.male_mask();
    return ipw_restricted(Method::RestrictPopulationIpw, data, selection_design, data.trial_mask() * male, male);
}

EffectEstimate restrict_covariates_ipw(const StudyDataset& data, const DesignSpec& selection_design) {
    return ipw_restricted(Method::RestrictCovariatesIpw, data, selection_design, data.trial_mask(),
                          Eigen::ArrayXd::Ones(data.size()));
}

ShiftModel ShiftModel::independent(ParameterDistribution b0, ParameterDistribution b1) {
    ShiftModel m;
    m.b0 = std::move(b0);
    m.b1 = std::move(b1);
    m.validate();
    return m;
}

ShiftModel ShiftModel::bivariate(MultivariateNormal joint) {
    ShiftModel m;
    m.joint = std::move(joint);
    m.validate();
    return m;
}

void ShiftModel::validate() const {
    const bool pair = b0.has_value() && b1.has_value();
    const bool partial = b0.has_value() != b1.has_value();
    if (partial) throw DataError("shift model: both b0 and b1 are required");
    if (pair == joint.has_value()) throw DataError("shift model: give either b0 and b1, or joint, but not both");
    if (pair && (dimension(*b0) != 1 || dimension(*b1) != 1)) {
        throw DataError("shift model: b0 and b1 must be univariate");
    }
    if (joint && joint->dimension() != 2) throw DataError("shift model: joint law must be bivariate");
}

Eigen::Vector2d ShiftModel::draw(SeededRng& rng) const {
    if (joint) return sample(*joint, rng);
    const double d0 = sample_scalar(*b0, rng);
    const double d1 = sample_scalar(*b1, rng);
    return {d0, d1};
}

void SynthesisSpec::validate() const {
    shift.validate();
    if (mc_reps < 1) throw DataError("synthesis: mc_reps must be at least 1");
}

PreparedSynthesis prepare_synthesis_gcomp(const StudyDataset& data, const DesignSpec& outcome_design) {
    const std::string tag(method_tag(Method::SynthesisGcomp));
    const Eigen::ArrayXd trial_men = data.trial_mask() * data.male_mask();
    if (trial_men.sum() == 0.0) throw EstimationError(tag + ": no trial rows with W=0");
    const StudyDataset target = data.population(kTarget);
    if (target.empty()) throw EstimationError(tag + ": no target rows");

    const FittedLogistic outcome = fit_logistic(outcome_design, data.filter(trial_men), Variable::Y);
    const Eigen::MatrixXd x0 = design_matrix(outcome_design, target, {{Variable::A, 0.0}, {Variable::W, 0.0}});
    const Eigen::MatrixXd x1 = design_matrix(outcome_design, target, {{Variable::A, 1.0}, {Variable::W, 0.0}});
    if (!x0.allFinite() || !x1.allFinite()) throw DataError(tag + ": outcome design variable missing in target");
    return compress_patterns(tag, MultivariateNormal(outcome.coefficients, outcome.covariance), x0, x1, target.W);
}

PreparedSynthesis prepare_synthesis_ipw(const StudyDataset& data, const DesignSpec& selection_design) {
    const std::string tag(method_tag(Method::SynthesisIpw));
    const Eigen::ArrayXd male = data.male_mask();
    const Eigen::ArrayXd trial_men = data.trial_mask() * male;
    if (trial_men.sum() == 0.0) throw EstimationError(tag + ": no trial rows with W=0");
    if ((male * data.target_mask()).sum() == 0.0) throw EstimationError(tag + ": no target rows with W=0");
    const StudyDataset target = data.population(kTarget);

    MsmStack stack{make_ipw_stack(data, selection_design, trial_men, male), {}};
    const IpwStack& b = stack.base;
    const Eigen::Index n = data.size();
    stack.m.resize(n, 2);
    stack.m.col(0) = b.trial.matrix();
    stack.m.col(1) = (b.trial * b.a).matrix();

    const double pi = treatment_probability(tag, b.a, b.trial);
    const FittedLogistic selection = fit_selection(data, selection_design, male);
    check_selection_probabilities(tag, b.l_trial, b.trial, selection.coefficients);

    // Weighted MSM on trial men for the starting value.
    const Eigen::ArrayXd odds = b.trial * (b.l_trial * selection.coefficients).array().exp();
    const Eigen::ArrayXd weight = odds * (b.a / pi + (1.0 - b.a) / (1.0 - pi));
    const StudyDataset trial_rows = data.filter(trial_men);
    const FittedLogistic msm = fit_logistic(DesignSpec::parse({"1", "A"}), trial_rows, Variable::Y,
                                            filtered(weight, trial_men));

    const Eigen::Index q = selection_design.width();
    Eigen::VectorXd init(q + 3);
    init(0) = logit(pi);
    init.segment(1, q) = selection.coefficients;
    init.tail(2) = msm.coefficients;

    EstimatingFunction<MsmStack> ef{q + 3, msm_contributions};
    SolverOptions<double> options;
    options.on_step = separation_guard(b.l_sel, b.in_target, b.sel, 1);
    const auto est = estimate(ef, stack, init, options);
    check_selection_probabilities(tag, b.l_trial, b.trial, est.theta_hat.segment(1, q));

    const Eigen::VectorXd gamma = est.theta_hat.tail(2);
    const Eigen::MatrixXd gamma_cov = est.covariance.bottomRightCorner(2, 2);
    const Eigen::Index n1 = target.size();
    Eigen::MatrixXd x0(n1, 2), x1(n1, 2);
    x0.col(0).setOnes();
    x0.col(1).setZero();
    x1.setOnes();
    return compress_patterns(tag, MultivariateNormal(gamma, gamma_cov), x0, x1, target.W);
}

namespace {

struct PatternValues {
    Eigen::ArrayXd effect, risk1, risk0;
};

PatternValues pattern_values(const PreparedSynthesis& prepared, const Eigen::VectorXd& stat,
                             const Eigen::Vector2d& shift) {
    const Eigen::ArrayXd w = prepared.pattern_w.array();
    const Eigen::ArrayXd eta0 = (prepared.pattern_x0 * stat).array() + shift(0) * w;
    const Eigen::ArrayXd eta1 = (prepared.pattern_x1 * stat).array() + (shift(0) + shift(1)) * w;
    PatternValues v;
    v.risk1 = expit(eta1);
    v.risk0 = expit(eta0);
    v.effect = v.risk1 - v.risk0;
    return v;
}

constexpr int kRepRetries = 5;
constexpr double kMaxFailedRepFraction = 0.01;

}  // namespace

SynthesisPoint synthesis_point(const PreparedSynthesis& prepared, const Eigen::VectorXd& statistical_params,
                               const Eigen::Vector2d& shift) {
    const PatternValues v = pattern_values(prepared, statistical_params, shift);
    double rd = 0.0, r1 = 0.0, r0 = 0.0;
    for (Eigen::Index p : prepared.row_pattern) {
        rd += v.effect(p);
        r1 += v.risk1(p);
        r0 += v.risk0(p);
    }
    const double n = double(prepared.row_pattern.size());
    return {rd / n, r1 / n, r0 / n};
}

EffectEstimate run_synthesis(const PreparedSynthesis& prepared, const ShiftModel& shift,
                             const MonteCarloSettings& settings) {
    shift.validate();
    if (settings.reps < 1) throw DataError("synthesis: reps must be at least 1");
    const auto reps = std::size_t(settings.reps);
    const auto n1 = Eigen::Index(prepared.row_pattern.size());
    if (n1 == 0) throw EstimationError(prepared.method + ": no target rows");

    std::vector<double> rd(reps), r1(reps), r0(reps);
    std::vector<char> ok(reps, 0);
    parallel_for(reps, settings.workers, [&](std::size_t rep) {
        const SeededRng rep_rng(settings.master_seed, rep);
        for (int attempt = 0; attempt <= kRepRetries; ++attempt) {
            SeededRng rng = rep_rng.stream(std::uint64_t(attempt));
            const Eigen::VectorXd stat = sample(prepared.statistical, rng);
            const Eigen::Vector2d s = shift.draw(rng);
            const std::vector<Eigen::Index> idx = resample_indices(n1, rng);
            const PatternValues v = pattern_values(prepared, stat, s);
            double e = 0.0, a1 = 0.0, a0 = 0.0;
            for (Eigen::Index i : idx) {
                const Eigen::Index p = prepared.row_pattern[std::size_t(i)];
                e += v.effect(p);
                a1 += v.risk1(p);
                a0 += v.risk0(p);
            }
            if (std::isfinite(e) && std::isfinite(a1) && std::isfinite(a0)) {
                rd[rep] = e / double(n1);
                r1[rep] = a1 / double(n1);
                r0[rep] = a0 / double(n1);
                ok[rep] = 1;
                return;
            }
        }
    });

    EffectEstimate out;
    out.method = prepared.method;
    std::vector<double> good_r1, good_r0;
    for (std::size_t i = 0; i < reps; ++i) {
        if (!ok[i]) {
            ++out.n_failed_draws;
            continue;
        }
        out.draws.push_back(rd[i]);
        good_r1.push_back(r1[i]);
        good_r0.push_back(r0[i]);
    }
    if (double(out.n_failed_draws) > kMaxFailedRepFraction * double(reps) || out.draws.empty()) {
        std::ostringstream os;
        os << prepared.method << ": " << out.n_failed_draws << " of " << reps << " Monte Carlo repetitions failed";
        throw EstimationError(os.str());
    }
    const DrawSummary summary = summarize_draws(out.draws);
    out.rd = summary.point;
    out.ci_lower = summary.lower;
    out.ci_upper = summary.upper;
    out.risk1 = summarize_draws(good_r1).point;
    out.risk0 = summarize_draws(good_r0).point;
    return out;
}

EffectEstimate synthesis_gcomp(const StudyDataset& data, const SynthesisSpec& spec) {
    spec.validate();
    return run_synthesis(prepare_synthesis_gcomp(data, spec.outcome_design), spec.shift,
                         {spec.mc_reps, spec.master_seed, spec.workers});
}

EffectEstimate synthesis_ipw(const StudyDataset& data, const SynthesisSpec& spec) {
    spec.validate();
    return run_synthesis(prepare_synthesis_ipw(data, spec.selection_design), spec.shift,
                         {spec.mc_reps, spec.master_seed, spec.workers});
}

Bounds nonparametric_bounds(const StudyDataset& data, const DesignSpec& outcome_design) {
    const Eigen::ArrayXd trial = data.trial_mask();
    if (trial.sum() == 0.0) throw EstimationError("bounds: no trial rows");
    const StudyDataset target = data.population(kTarget);
    if (target.empty()) throw EstimationError("bounds: no target rows");

    const FittedLogistic outcome = fit_logistic(outcome_design, data.filter(trial), Variable::Y);
    const Eigen::ArrayXd men = target.male_mask();
    const Eigen::ArrayXd f1 = outcome.predict(target, {{Variable::A, 1.0}, {Variable::W, 0.0}});
    const Eigen::ArrayXd f0 = outcome.predict(target, {{Variable::A, 0.0}, {Variable::W, 0.0}});
    const double n1 = double(target.size());
    const double base = (men * (f1 - f0)).sum() / n1;
    const double women_share = double(target.size() - Eigen::Index(men.sum())) / n1;
    return {base - women_share, base + women_share};
}

std::vector<StratumCount> positivity_diagnostic(const StudyDataset& data, const std::vector<Variable>& strata) {
    std::map<std::vector<double>, std::pair<Eigen::Index, Eigen::Index>> counts;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        std::vector<double> key;
        key.reserve(strata.size());
        for (Variable v : strata) key.push_back(data.column(v)(i));
        auto& c = counts[key];
        if (data.R(i) == kTarget) ++c.first;
        if (data.R(i) == kTrial) ++c.second;
    }
    std::vector<StratumCount> flagged;
    for (const auto& [key, c] : counts) {
        if (c.first == 0 || c.second > 0) continue;
        StratumCount s;
        for (std::size_t j = 0; j < strata.size(); ++j) s.stratum.emplace_back(strata[j], key[j]);
        s.target_count = c.first;
        s.trial_count = c.second;
        flagged.push_back(std::move(s));
    }
    return flagged;
}

double percentile(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw EstimationError("percentile of an empty sample");
    const double pos = q * double(sorted.size() - 1);
    const auto lo = std::size_t(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - double(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

DrawSummary summarize_draws(std::span<const double> draws) {
    if (draws.empty()) throw EstimationError("summarize_draws: no draws");
    std::vector<double> sorted(draws.begin(), draws.end());
    for (double d : sorted) {
        if (!std::isfinite(d)) throw EstimationError("summarize_draws: non-finite draw");
    }
    std::sort(sorted.begin(), sorted.end());
    return {percentile(sorted, 0.5), percentile(sorted, 0.025), percentile(sorted, 0.975)};
}

double hajek_mean(const Eigen::ArrayXd& y, const Eigen::ArrayXd& weights) {
    const double total = weights.sum();
    if (!(total > 0.0)) throw EstimationError("hajek_mean: weights sum to zero");
    return (weights * y).sum() / total;
}

Eigen::ArrayXd transport_weights(const StudyDataset& data, const FittedLogistic& selection, double treat_prob) {
    const Eigen::ArrayXd trial = data.trial_mask();
    const Eigen::MatrixXd l = zero_masked_rows(design_matrix(selection.design, data), trial);
    const Eigen::ArrayXd a = masked(data.A, trial);
    const Eigen::ArrayXd odds = trial * (l * selection.coefficients).array().exp();
    return odds * (a / treat_prob + (1.0 - a) / (1.0 - treat_prob));
}

}  // namespace transport
