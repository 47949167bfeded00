#include "transport/datagen.hpp"

#include "transport/errors.hpp"
#include "transport/glm.hpp"

#include <cmath>

namespace transport {

double OutcomeCoefficients::probability(double a, double v, double w) const {
    return expit(linear_predictor(a, v, w));
}

void ScenarioConfig::validate() const {
    if (n_clinic < 1 || n_trial < 1 || n_secret < 1) throw DataError("scenario: sample sizes must be at least 1");
    if (n_oracle < 1) throw DataError("scenario: n_oracle must be at least 1");
    for (double p : {clinic.female_prob, trial.female_prob}) {
        if (!(p >= 0.0 && p <= 1.0)) throw DataError("scenario: probabilities must lie in [0, 1]");
    }
    if (!(treat_prob > 0.0 && treat_prob < 1.0)) throw DataError("scenario: treat_prob must lie in (0, 1)");
}

double round_age(double v) { return std::round(v); }

namespace {

void draw_covariates(const CovariateLaw& law, SeededRng& rng, double& v, double& w) {
    w = rng.bernoulli(law.female_prob) ? 1.0 : 0.0;
    v = round_age(sample(law.age, rng));
}

StudyDataset allocate(Eigen::Index n) {
    StudyDataset d;
    d.R.resize(n);
    d.A.setConstant(n, kMissing);
    d.Y.setConstant(n, kMissing);
    d.V.resize(n);
    d.W.resize(n);
    return d;
}

StudyDataset generate_randomized(const ScenarioConfig& config, const CovariateLaw& law, Eigen::Index n,
                                 SeededRng& rng) {
    if (n < 1) throw std::invalid_argument("generate: n must be at least 1");
    StudyDataset d = allocate(n);
    d.R.setConstant(kTrial);
    for (Eigen::Index i = 0; i < n; ++i) {
        draw_covariates(law, rng, d.V(i), d.W(i));
        d.A(i) = rng.bernoulli(config.treat_prob) ? 1.0 : 0.0;
        d.Y(i) = rng.bernoulli(config.outcome.probability(d.A(i), d.V(i), d.W(i))) ? 1.0 : 0.0;
    }
    return d;
}

SecretTrialSummary fit_secret(const StudyDataset& secret) {
    static const DesignSpec conditional = DesignSpec::parse({"1", "A", "V", "W", "A*W"});
    static const DesignSpec marginal = DesignSpec::parse({"1", "A", "W", "A*W"});
    const FittedLogistic g = fit_logistic(conditional, secret, Variable::Y);
    const FittedLogistic m = fit_logistic(marginal, secret, Variable::Y);
    SecretTrialSummary s;
    s.beta = g.coefficients.tail(2);
    s.beta_cov = g.covariance.bottomRightCorner(2, 2);
    s.delta = m.coefficients.tail(2);
    s.delta_cov = m.covariance.bottomRightCorner(2, 2);
    return s;
}

}  // namespace

StudyDataset generate_clinic(const ScenarioConfig& config, Eigen::Index n, SeededRng& rng) {
    if (n < 1) throw std::invalid_argument("generate_clinic: n must be at least 1");
    StudyDataset d = allocate(n);
    d.R.setConstant(kTarget);
    for (Eigen::Index i = 0; i < n; ++i) draw_covariates(config.clinic, rng, d.V(i), d.W(i));
    return d;
}

StudyDataset generate_trial(const ScenarioConfig& config, Eigen::Index n, SeededRng& rng) {
    return generate_randomized(config, config.trial, n, rng);
}

SecretTrialSummary generate_secret_trial(const ScenarioConfig& config, Eigen::Index n, SeededRng& rng) {
    SeededRng first = rng.stream(0);
    try {
        return fit_secret(generate_randomized(config, config.clinic, n, first));
    } catch (const EstimationError&) {
        SeededRng retry = rng.stream(1);
        return fit_secret(generate_randomized(config, config.clinic, n, retry));
    }
}

double true_psi(const ScenarioConfig& config, Eigen::Index n_oracle, SeededRng& rng) {
    if (n_oracle < 1) throw std::invalid_argument("true_psi: n_oracle must be at least 1");
    double total = 0.0;
    for (Eigen::Index i = 0; i < n_oracle; ++i) {
        double v, w;
        draw_covariates(config.clinic, rng, v, w);
        total += config.outcome.probability(1.0, v, w) - config.outcome.probability(0.0, v, w);
    }
    return total / double(n_oracle);
}

}  // namespace transport
