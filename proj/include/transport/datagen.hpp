#pragma once
// Data-generating process for the simulation experiment: a clinic (target)
// population with men and women, a trial enrolling only men, an optional
// "secret" trial on the clinic covariate law that leaks only fitted summary
// parameters, and the brute-force truth for psi.

#include "transport/dataset.hpp"
#include "transport/dists.hpp"

#include <Eigen/Dense>

#include <cstdint>

namespace transport {

// Pr(Y = 1 | A, V, W) = expit(intercept + treatment A + age V + female W + treatment_female A W)
struct OutcomeCoefficients {
    double intercept = -3.25;
    double treatment = 1.50;
    double age = 0.08;
    double female = -0.02;
    double treatment_female = -0.65;

    double linear_predictor(double a, double v, double w) const {
        return intercept + treatment * a + age * v + female * w + treatment_female * a * w;
    }
    double probability(double a, double v, double w) const;
};

struct CovariateLaw {
    double female_prob;
    Trapezoid age;  // drawn then rounded to the nearest integer
};

struct ScenarioConfig {
    Eigen::Index n_clinic = 1000;
    Eigen::Index n_trial = 1000;
    Eigen::Index n_secret = 2000;
    OutcomeCoefficients outcome;
    CovariateLaw clinic{0.667, Trapezoid(18, 18, 25, 30)};
    CovariateLaw trial{0.0, Trapezoid(18, 25, 30, 30)};
    double treat_prob = 0.5;
    Eigen::Index n_oracle = 10'000'000;
    std::uint64_t master_seed = 7;

    void validate() const;
};

// Round half away from zero.
double round_age(double v);

StudyDataset generate_clinic(const ScenarioConfig& config, Eigen::Index n, SeededRng& rng);
StudyDataset generate_trial(const ScenarioConfig& config, Eigen::Index n, SeededRng& rng);
inline StudyDataset generate_clinic(Eigen::Index n, SeededRng& rng) { return generate_clinic({}, n, rng); }
inline StudyDataset generate_trial(Eigen::Index n, SeededRng& rng) { return generate_trial({}, n, rng); }

// Fitted shift parameters from the secret trial; no row-level data is retained.
//   beta:  (W, A*W) coefficients of logistic(1, A, V, W, A*W)  -- g-computation form
//   delta: (W, A*W) coefficients of logistic(1, A, W, A*W)     -- marginal (IPW) form
struct SecretTrialSummary {
    Eigen::Vector2d beta;
    Eigen::Matrix2d beta_cov;
    Eigen::Vector2d delta;
    Eigen::Matrix2d delta_cov;
};

// Covariates follow the clinic law, A ~ Bernoulli(treat_prob), Y from the outcome
// model. On a separated fit the trial is regenerated once from a fresh sub-stream.
SecretTrialSummary generate_secret_trial(const ScenarioConfig& config, Eigen::Index n, SeededRng& rng);

// Mean over n_oracle clinic-law covariate draws of Pr(Y=1|A=1,V,W) - Pr(Y=1|A=0,V,W).
double true_psi(const ScenarioConfig& config, Eigen::Index n_oracle, SeededRng& rng);
inline double true_psi(Eigen::Index n_oracle, SeededRng& rng) { return true_psi({}, n_oracle, rng); }

}  // namespace transport
