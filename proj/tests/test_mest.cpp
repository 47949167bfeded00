#include "catch_amalgamated.hpp"

#include "transport/glm.hpp"
#include "transport/mest.hpp"

#include <random>

using namespace transport;
using Catch::Approx;

namespace {

struct Sample {
    Eigen::VectorXd y;
};

const EstimatingFunction<Sample> mean_equation{
    1, [](const Sample& d, const Eigen::VectorXd& theta) -> Eigen::MatrixXd {
        return (d.y.array() - theta(0)).matrix();
    }};

struct Logistic {
    Eigen::MatrixXd x;
    Eigen::ArrayXd y;
};

const EstimatingFunction<Logistic> logistic_ef{
    2, [](const Logistic& d, const Eigen::VectorXd& beta) {
        return logistic_score(d.x, d.y, Eigen::ArrayXd::Ones(d.y.size()), beta);
    }};

Logistic simulate_logistic(int n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    Logistic d{Eigen::MatrixXd(n, 2), Eigen::ArrayXd(n)};
    for (int i = 0; i < n; ++i) {
        const double x = z(gen);
        d.x(i, 0) = 1.0;
        d.x(i, 1) = x;
        d.y(i) = u(gen) < 1.0 / (1.0 + std::exp(0.5 - 1.0 * x)) ? 1.0 : 0.0;
    }
    return d;
}

Eigen::MatrixXd analytic_logistic_jacobian(const Logistic& d, const Eigen::VectorXd& beta) {
    const Eigen::ArrayXd p = 1.0 / (1.0 + (-(d.x * beta).array()).exp());
    return -(d.x.transpose() * (p * (1.0 - p)).matrix().asDiagonal() * d.x);
}

}  // namespace

TEST_CASE("mean equation solves to the sample mean", "[mest]") {
    const Sample s{Eigen::Vector3d(0, 1, 1)};
    const Eigen::VectorXd theta = solve(mean_equation, s, Eigen::VectorXd::Zero(1));
    CHECK(theta(0) == Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(std::abs(mean_equation.summed(s, theta)(0)) <= 1e-9);
}

TEST_CASE("numerical jacobian of linear and polynomial functions", "[mest]") {
    const Sample s{Eigen::Vector3d(0, 1, 1)};
    const Eigen::MatrixXd jac = numerical_jacobian(mean_equation, s, Eigen::VectorXd::Constant(1, 0.3));
    CHECK(jac(0, 0) == Approx(-3.0).epsilon(1e-10));

    const EstimatingFunction<Sample> quadratic{
        1, [](const Sample& d, const Eigen::VectorXd& t) -> Eigen::MatrixXd {
            return (t(0) * t(0) - d.y.array()).matrix();
        }};
    const Sample obs{Eigen::Vector4d(1, 2, 3, 4)};
    for (double t : {0.5, 1.7, 12.0}) {
        const double got = numerical_jacobian(quadratic, obs, Eigen::VectorXd::Constant(1, t))(0, 0);
        CHECK(std::abs(got - 2.0 * t * 4.0) <= 1e-6);
    }
}

TEST_CASE("sandwich variance of the mean is the biased variance over n", "[mest]") {
    const Sample s{Eigen::Vector3d(0, 1, 1)};
    const auto est = estimate(mean_equation, s, Eigen::VectorXd::Zero(1));
    CHECK(est.converged);
    CHECK(est.covariance(0, 0) == Approx((2.0 / 9.0) / 3.0).epsilon(1e-12));
    CHECK(est.bread(0, 0) == Approx(1.0).epsilon(1e-10));

    std::mt19937_64 gen(17);
    std::normal_distribution<double> z(1.0, 2.0);
    Sample big{Eigen::VectorXd(500)};
    for (auto& y : big.y) y = z(gen);
    const auto wide = estimate(mean_equation, big, Eigen::VectorXd::Zero(1));
    const double oracle = (big.y.array() - big.y.mean()).square().mean() / 500.0;
    CHECK(wide.covariance(0, 0) == Approx(oracle).epsilon(1e-12));
}

TEST_CASE("refined jacobian is exact for polynomials up to cubic", "[mest]") {
    const Sample obs{Eigen::Vector4d(1, 2, 3, 4)};
    const EstimatingFunction<Sample> cubic{
        1, [](const Sample& d, const Eigen::VectorXd& t) -> Eigen::MatrixXd {
            return (t(0) * t(0) * t(0) - d.y.array()).matrix();
        }};
    for (double t : {0.5, -1.7, 12.0}) {
        CHECK(refined_jacobian(cubic, obs, Eigen::VectorXd::Constant(1, t))(0, 0) ==
              Approx(4.0 * 3.0 * t * t).epsilon(1e-11));
    }
}

TEST_CASE("logistic score jacobian matches the analytic Hessian", "[mest]") {
    const Logistic d = simulate_logistic(800, 3);
    const Eigen::Vector2d beta(-0.4, 0.9);
    const Eigen::MatrixXd numeric = numerical_jacobian(logistic_ef, d, Eigen::VectorXd(beta));
    const Eigen::MatrixXd analytic = analytic_logistic_jacobian(d, beta);
    for (Eigen::Index i = 0; i < 2; ++i) {
        for (Eigen::Index j = 0; j < 2; ++j) {
            CHECK(std::abs(numeric(i, j) - analytic(i, j)) <= 1e-5 * std::abs(analytic(i, j)));
        }
    }
}

TEST_CASE("saturated logistic model recovers 2x2 log-odds", "[mest]") {
    // A=0: 3 events / 10; A=1: 6 events / 10
    Logistic d{Eigen::MatrixXd(20, 2), Eigen::ArrayXd(20)};
    for (int i = 0; i < 20; ++i) {
        const bool treated = i >= 10;
        const int k = i % 10;
        d.x(i, 0) = 1.0;
        d.x(i, 1) = treated ? 1.0 : 0.0;
        d.y(i) = (treated ? k < 6 : k < 3) ? 1.0 : 0.0;
    }
    const Eigen::VectorXd beta = solve(logistic_ef, d, Eigen::VectorXd::Zero(2));
    CHECK(beta(0) == Approx(std::log(3.0 / 7.0)).epsilon(1e-9));
    CHECK(beta(1) == Approx(std::log(6.0 / 4.0) - std::log(3.0 / 7.0)).epsilon(1e-9));
}

TEST_CASE("sandwich and model-based standard errors agree under correct specification", "[mest]") {
    const Logistic d = simulate_logistic(5000, 11);
    const auto est = estimate(logistic_ef, d, Eigen::VectorXd::Zero(2));
    const Eigen::MatrixXd info_inv = (-analytic_logistic_jacobian(d, est.theta_hat)).inverse();
    for (Eigen::Index j = 0; j < 2; ++j) {
        const double model_se = std::sqrt(info_inv(j, j));
        CHECK(std::abs(est.std_error(j) / model_se - 1.0) < 0.15);
    }
}

TEST_CASE("stacked arm means: variance of the difference adds", "[mest]") {
    struct Arms {
        Eigen::ArrayXd a, y;
    };
    const EstimatingFunction<Arms> stack{
        3, [](const Arms& d, const Eigen::VectorXd& t) {
            Eigen::MatrixXd phi(d.y.size(), 3);
            phi.col(0) = ((1.0 - d.a) * (d.y - t(0))).matrix();
            phi.col(1) = (d.a * (d.y - t(1))).matrix();
            phi.col(2).setConstant(t(1) - t(0) - t(2));
            return phi;
        }};
    Arms d;
    d.a = (Eigen::ArrayXd(10) << 0, 0, 0, 0, 1, 1, 1, 1, 1, 1).finished();
    d.y = (Eigen::ArrayXd(10) << 0, 1, 0, 0, 1, 1, 0, 1, 1, 0).finished();
    const auto est = estimate(stack, d, Eigen::VectorXd::Zero(3));

    // Sequential: separate sample means.
    CHECK(est.theta_hat(0) == Approx(0.25).epsilon(1e-10));
    CHECK(est.theta_hat(1) == Approx(4.0 / 6.0).epsilon(1e-10));
    CHECK(est.theta_hat(2) == Approx(4.0 / 6.0 - 0.25).epsilon(1e-10));
    const auto& cov = est.covariance;
    CHECK(cov(2, 2) == Approx(cov(0, 0) + cov(1, 1)).epsilon(1e-9));
    CHECK(std::abs(cov(0, 1)) < 1e-12);
}

TEST_CASE("sandwich covariance is symmetric and invariant to row order", "[mest]") {
    Logistic d = simulate_logistic(400, 5);
    const auto est = estimate(logistic_ef, d, Eigen::VectorXd::Zero(2));
    CHECK((est.covariance - est.covariance.transpose()).cwiseAbs().maxCoeff() <=
          1e-8 * est.covariance.cwiseAbs().maxCoeff());

    Eigen::PermutationMatrix<Eigen::Dynamic> perm(d.y.size());
    perm.setIdentity();
    std::mt19937_64 gen(1);
    std::shuffle(perm.indices().data(), perm.indices().data() + perm.indices().size(), gen);
    Logistic shuffled{perm * d.x, (perm * d.y.matrix()).array()};
    const auto est2 = estimate(logistic_ef, shuffled, Eigen::VectorXd::Zero(2));
    CHECK((est.theta_hat - est2.theta_hat).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((est.covariance - est2.covariance).cwiseAbs().maxCoeff() < 1e-8 * est.covariance.cwiseAbs().maxCoeff());
}

TEST_CASE("numerical and analytic derivatives give the same covariance", "[mest]") {
    const Logistic d = simulate_logistic(1000, 8);
    const auto numeric = estimate(logistic_ef, d, Eigen::VectorXd::Zero(2));
    const Eigen::MatrixXd phi = logistic_ef.contributions(d, numeric.theta_hat);
    const auto analytic =
        sandwich_from_parts<double>(numeric.theta_hat, phi, analytic_logistic_jacobian(d, numeric.theta_hat));
    for (Eigen::Index i = 0; i < 2; ++i) {
        for (Eigen::Index j = 0; j < 2; ++j) {
            CHECK(std::abs(numeric.covariance(i, j) - analytic.covariance(i, j)) <=
                  1e-5 * std::abs(analytic.covariance(i, j)));
        }
    }
}

TEST_CASE("solver failures are explicit", "[mest]") {
    const Sample s{Eigen::Vector3d(0, 1, 1)};

    SECTION("no root") {
        const EstimatingFunction<Sample> no_root{
            1, [](const Sample& d, const Eigen::VectorXd& t) -> Eigen::MatrixXd {
                return Eigen::VectorXd::Constant(d.y.size(), t(0) * t(0) + 1.0);
            }};
        try {
            solve(no_root, s, Eigen::VectorXd::Constant(1, 0.7));
            FAIL("expected ConvergenceError");
        } catch (const ConvergenceError& e) {
            CHECK(e.residual_norm() >= 3.0);
        }
    }
    SECTION("singular jacobian") {
        const EstimatingFunction<Sample> degenerate{
            2, [](const Sample& d, const Eigen::VectorXd& t) {
                Eigen::MatrixXd phi(d.y.size(), 2);
                phi.col(0) = (d.y.array() - t(0)).matrix();
                phi.col(1) = (d.y.array() - t(0)).matrix();
                return phi;
            }};
        CHECK_THROWS_AS(solve(degenerate, s, Eigen::VectorXd::Zero(2)), SingularMatrixError);
    }
    SECTION("non-finite perturbation names the coordinate") {
        const EstimatingFunction<Sample> root{
            2, [](const Sample& d, const Eigen::VectorXd& t) {
                Eigen::MatrixXd phi(d.y.size(), 2);
                phi.col(0) = (d.y.array() - t(0)).matrix();
                phi.col(1).setConstant(std::sqrt(t(1)));
                return phi;
            }};
        try {
            numerical_jacobian(root, s, Eigen::Vector2d(0.5, 0.0).eval());
            FAIL("expected NonFiniteError");
        } catch (const NonFiniteError& e) {
            CHECK(e.coordinate() == 1);
        }
    }
    SECTION("max iterations") {
        SolverOptions<double> opts;
        opts.max_iterations = 0;
        CHECK_THROWS_AS(solve(mean_equation, s, Eigen::VectorXd::Zero(1), opts), ConvergenceError);
    }
}
