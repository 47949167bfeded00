#include "catch_amalgamated.hpp"

#include "test_support.hpp"
#include "transport/errors.hpp"
#include "transport/glm.hpp"

using namespace transport;
using namespace transport::testing;
using Catch::Approx;

namespace {

// Textbook IRLS, used only as an independent check on the M-estimation fit.
Eigen::VectorXd irls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
    for (int it = 0; it < 100; ++it) {
        const Eigen::ArrayXd p = (x * beta).unaryExpr([](double e) { return plain_expit(e); }).array();
        const Eigen::ArrayXd d = w.array() * p * (1.0 - p);
        const Eigen::MatrixXd info = x.transpose() * d.matrix().asDiagonal() * x;
        const Eigen::VectorXd score = x.transpose() * (w.array() * (y.array() - p)).matrix();
        const Eigen::VectorXd step = info.ldlt().solve(score);
        beta += step;
        if (step.cwiseAbs().maxCoeff() < 1e-13) break;
    }
    return beta;
}

StudyDataset trial_rows(const std::vector<std::array<double, 3>>& avy) {
    std::vector<Observation> rows;
    for (const auto& [a, v, y] : avy) rows.push_back(trial_row(a, y, v));
    return StudyDataset::from_rows(rows);
}

}  // namespace

TEST_CASE("expit reference values", "[glm]") {
    CHECK(expit(0.0) == 0.5);
    CHECK(expit(-1.43) == Approx(plain_expit(-1.43)).epsilon(1e-15));
    CHECK(expit(-1.43) == Approx(0.193099).margin(5e-7));
    CHECK(expit(750.0) == 1.0);
    CHECK(expit(-750.0) == 0.0);
    CHECK(std::isfinite(expit(-750.0)));
    const Eigen::ArrayXd xs = (Eigen::ArrayXd(4) << -750, -1.43, 0, 750).finished();
    const Eigen::ArrayXd ps = expit(xs);
    for (Eigen::Index i = 0; i < xs.size(); ++i) CHECK(ps(i) == Approx(expit(xs(i))).epsilon(1e-14).margin(1e-300));
    CHECK(logit(0.25) == Approx(std::log(1.0 / 3.0)));
}

TEST_CASE("intercept-only fit recovers the log-odds of the mean", "[glm]") {
    const StudyDataset d = trial_rows({{0, 20, 0}, {0, 20, 1}, {1, 20, 1}, {1, 20, 1}});
    const auto fit = fit_logistic(DesignSpec::parse({"1"}), d, Variable::Y);
    CHECK(fit.coefficients(0) == Approx(std::log(3.0)).epsilon(1e-10));
    CHECK(fit.n_used == 4);
}

TEST_CASE("saturated 2x2 model gives cell log-odds and log-odds ratio", "[glm]") {
    std::vector<std::array<double, 3>> rows;
    // A=0: 2 of 8 events; A=1: 5 of 7 events
    for (int i = 0; i < 8; ++i) rows.push_back({0, 20, i < 2 ? 1.0 : 0.0});
    for (int i = 0; i < 7; ++i) rows.push_back({1, 20, i < 5 ? 1.0 : 0.0});
    const auto fit = fit_logistic(DesignSpec::parse({"1", "A"}), trial_rows(rows), Variable::Y);
    const double lo0 = std::log(2.0 / 6.0), lo1 = std::log(5.0 / 2.0);
    CHECK(fit.coefficients(0) == Approx(lo0).epsilon(1e-9));
    CHECK(fit.coefficients(1) == Approx(lo1 - lo0).epsilon(1e-9));
    // Robust variance of a saturated model equals the Woolf variance.
    CHECK(fit.covariance(1, 1) == Approx(1.0 / 2 + 1.0 / 6 + 1.0 / 5 + 1.0 / 2).epsilon(1e-6));
    CHECK((fit.covariance - fit.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * fit.covariance.norm());
}

TEST_CASE("treatment model on generated trial is near one half", "[glm]") {
    const StudyDataset trial = simulated_study(31).population(kTrial);
    const auto fit = fit_logistic(DesignSpec::parse({"1"}), trial, Variable::A);
    CHECK(std::abs(expit(fit.coefficients(0)) - 0.5) < 0.04);
}

TEST_CASE("fit agrees with IRLS, weighted and unweighted", "[glm]") {
    const StudyDataset trial = simulated_study(32).population(kTrial);
    const DesignSpec design = DesignSpec::parse({"1", "A", "V", "V^2"});
    const Eigen::MatrixXd x = design_matrix(design, trial);

    const auto plain = fit_logistic(design, trial, Variable::Y);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(trial.size());
    CHECK((plain.coefficients - irls(x, trial.Y, ones)).cwiseAbs().maxCoeff() < 1e-6);

    const auto unit_weighted = fit_logistic(design, trial, Variable::Y, ones);
    CHECK((plain.coefficients - unit_weighted.coefficients).cwiseAbs().maxCoeff() < 1e-8);

    Eigen::VectorXd w(trial.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = 0.5 + 0.1 * double(i % 7);
    const auto weighted = fit_logistic(design, trial, Variable::Y, w);
    CHECK((weighted.coefficients - irls(x, trial.Y, w)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("predict applies overrides", "[glm]") {
    FittedLogistic zero{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3), DesignSpec::parse({"1", "A", "V"}), 0};
    CHECK(zero.predict(trial_row(1, 0, 27)) == 0.5);

    const OutcomeCoefficients c;
    FittedLogistic truth{(Eigen::VectorXd(5) << c.intercept, c.treatment, c.age, c.female, c.treatment_female).finished(),
                         Eigen::MatrixXd::Identity(5, 5), DesignSpec::parse({"1", "A", "V", "W", "A*W"}), 0};
    const Observation row = target_row(23, 1);
    CHECK(truth.predict(row, {{Variable::A, 1.0}}) == Approx(plain_expit(-0.58)).epsilon(1e-12));
    CHECK(truth.predict(row, {{Variable::A, 0.0}}) == Approx(plain_expit(-1.43)).epsilon(1e-12));

    // Data A is ignored when overridden.
    const Observation treated = trial_row(1, 0, 23, 1);
    const Observation control = trial_row(0, 0, 23, 1);
    CHECK(truth.predict(treated, {{Variable::A, 0.0}}) == truth.predict(control, {{Variable::A, 0.0}}));

    CHECK_THROWS_AS(truth.predict(row), DataError);

    // Monotone in the direction of each coefficient's covariate.
    FittedLogistic bumped = truth;
    bumped.coefficients(2) += 0.1;
    CHECK(bumped.predict(row, {{Variable::A, 1.0}}) > truth.predict(row, {{Variable::A, 1.0}}));
}

TEST_CASE("design matrix construction", "[glm]") {
    const StudyDataset d = simulated_study(33, 200, 200);
    const DesignSpec spec = DesignSpec::parse({"1", "V", "V^2", "V*I(V>25)", "A:W"});
    CHECK(spec.labels() == std::vector<std::string>{"1", "V", "V^2", "V*I(V>25)", "A*W"});
    const Eigen::MatrixXd x = design_matrix(spec, d);
    CHECK(x.col(0).isOnes());
    CHECK(x.col(2).array().cwiseEqual(x.col(1).array().square()).all());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        CHECK(x(i, 3) == (d.V(i) > 25 ? d.V(i) : 0.0));
    }
    // A is missing on target rows, so A*W is NaN there.
    const Eigen::ArrayXd target = d.target_mask();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (target(i) == 1.0) CHECK(std::isnan(x(i, 4)));
    }
    CHECK(zero_masked_rows(x, 1.0 - target).allFinite());
    const Eigen::MatrixXd again = design_matrix(spec, d);
    CHECK(again.leftCols(4) == x.leftCols(4));

    CHECK_THROWS_AS(DesignSpec::parse({}), DataError);
    CHECK_THROWS_AS(DesignSpec::parse({"Q"}), DataError);
    CHECK_THROWS_AS(DesignSpec::parse({"V*I(W>2)"}), DataError);
    CHECK_THROWS_AS(DesignSpec::parse({"V*I(V>x)"}), DataError);
}

TEST_CASE("separation and rank deficiency fail explicitly", "[glm]") {
    std::vector<std::array<double, 3>> rows;
    for (int i = 0; i < 10; ++i) rows.push_back({double(i % 2), double(18 + i), i >= 5 ? 1.0 : 0.0});
    CHECK_THROWS_AS(fit_logistic(DesignSpec::parse({"1", "V"}), trial_rows(rows), Variable::Y), SeparationError);

    const StudyDataset d = simulated_study(34).population(kTrial);
    CHECK_THROWS_AS(fit_logistic(DesignSpec::parse({"1", "V", "W"}), d, Variable::Y), SingularMatrixError);

    CHECK_THROWS_AS(fit_logistic(DesignSpec::parse({"1"}), d, Variable::V), DataError);
    CHECK_THROWS_AS(fit_logistic(DesignSpec::parse({"1"}), d, Variable::Y, Eigen::VectorXd::Zero(d.size())),
                    DataError);
}
