#pragma once
// M-estimation: root-finding for stacked estimating equations and the
// empirical sandwich covariance.
//
// An estimating function maps (data, theta) to an n x k matrix whose row i is
// the contribution phi(O_i; theta). The estimate solves sum_i phi(O_i; theta) = 0.
// Everything here is templated on the scalar type; the data type is opaque to
// the engine and only ever passed through to the evaluator.

#include "transport/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>

namespace transport {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Data, typename Scalar = double>
struct EstimatingFunction {
    using Vector = VectorX<Scalar>;
    using Matrix = MatrixX<Scalar>;
    using Evaluator = std::function<Matrix(const Data&, const Vector&)>;

    Eigen::Index arity = 0;
    Evaluator evaluate;

    Matrix contributions(const Data& data, const Vector& theta) const {
        if (theta.size() != arity) {
            throw std::invalid_argument("estimating function: theta has length " +
                                        std::to_string(theta.size()) + ", expected " +
                                        std::to_string(arity));
        }
        Matrix phi = evaluate(data, theta);
        if (phi.cols() != arity) {
            throw std::logic_error("estimating function: evaluator returned " +
                                   std::to_string(phi.cols()) + " columns, expected " +
                                   std::to_string(arity));
        }
        return phi;
    }

    Vector summed(const Data& data, const Vector& theta) const {
        return contributions(data, theta).colwise().sum().transpose();
    }
};

template <typename Scalar = double>
struct SolverOptions {
    Scalar tolerance = Scalar(1e-9);
    int max_iterations = 200;
    int max_halvings = 40;
    // Called after every accepted Newton step with (previous, next). May throw to
    // abort the solve, e.g. when a logistic block is diverging.
    std::function<void(const VectorX<Scalar>&, const VectorX<Scalar>&)> on_step;
};

template <typename Scalar = double>
struct MEstimate {
    VectorX<Scalar> theta_hat;
    MatrixX<Scalar> bread;
    MatrixX<Scalar> filling;
    MatrixX<Scalar> covariance;
    bool converged = false;
    Scalar residual_norm = Scalar(0);
    int iterations = 0;
    Eigen::Index n = 0;

    Scalar std_error(Eigen::Index j) const { return std::sqrt(covariance(j, j)); }
};

template <typename Scalar>
Scalar finite_difference_step(Scalar theta_j) {
    return std::max(Scalar(1e-6), Scalar(1e-6) * std::abs(theta_j));
}

namespace detail {

// Central differences with step `scale * max(1, |theta_j|)` per coordinate. The
// steps actually taken are written to `steps`.
template <typename Data, typename Scalar>
MatrixX<Scalar> central_difference(const EstimatingFunction<Data, Scalar>& ef, const Data& data,
                                   const VectorX<Scalar>& theta, Scalar scale, VectorX<Scalar>& steps) {
    const Eigen::Index k = ef.arity;
    if (!theta.allFinite()) throw NonFiniteError("numerical_jacobian: theta is not finite", -1);
    MatrixX<Scalar> jac(k, k);
    steps.resize(k);
    VectorX<Scalar> probe = theta;
    for (Eigen::Index j = 0; j < k; ++j) {
        // Snap h so that theta_j +/- h are exact and the divisor is the true spacing.
        const volatile Scalar shifted = theta(j) + scale * std::max(Scalar(1), std::abs(theta(j)));
        const Scalar h = shifted - theta(j);
        steps(j) = h;
        probe(j) = theta(j) + h;
        const VectorX<Scalar> upper = ef.summed(data, probe);
        probe(j) = theta(j) - h;
        const VectorX<Scalar> lower = ef.summed(data, probe);
        probe(j) = theta(j);
        if (!upper.allFinite() || !lower.allFinite()) {
            throw NonFiniteError("numerical_jacobian: non-finite estimating function when perturbing "
                                 "coordinate " + std::to_string(j),
                                 j);
        }
        jac.col(j) = (upper - lower) / (Scalar(2) * h);
    }
    return jac;
}

}  // namespace detail

// Central-difference Jacobian of the summed estimating functions.
template <typename Data, typename Scalar>
MatrixX<Scalar> numerical_jacobian(const EstimatingFunction<Data, Scalar>& ef, const Data& data,
                                   const std::type_identity_t<VectorX<Scalar>>& theta) {
    VectorX<Scalar> steps;
    return detail::central_difference(ef, data, theta, finite_difference_step(Scalar(1)), steps);
}

// Richardson extrapolation of two central differences (steps h and about 2h), which
// cancels the h^2 error term. The larger steps keep rounding in the summed functions
// near 1e-13 relative, so the bread is exact for functions linear in theta. Falls
// back to numerical_jacobian when the wider probes leave the domain.
template <typename Data, typename Scalar>
MatrixX<Scalar> refined_jacobian(const EstimatingFunction<Data, Scalar>& ef, const Data& data,
                                 const std::type_identity_t<VectorX<Scalar>>& theta) {
    try {
        VectorX<Scalar> h1, h2;
        const MatrixX<Scalar> d1 = detail::central_difference(ef, data, theta, Scalar(1e-3), h1);
        const MatrixX<Scalar> d2 = detail::central_difference(ef, data, theta, Scalar(2e-3), h2);
        MatrixX<Scalar> jac(d1.rows(), d1.cols());
        for (Eigen::Index j = 0; j < jac.cols(); ++j) {
            const Scalar a = h1(j) * h1(j), b = h2(j) * h2(j);
            jac.col(j) = (b * d1.col(j) - a * d2.col(j)) / (b - a);
        }
        return jac;
    } catch (const NonFiniteError&) {
        return numerical_jacobian(ef, data, theta);
    }
}

namespace detail {

template <typename Scalar>
Scalar rounding_floor(const MatrixX<Scalar>& phi) {
    // Magnitude below which the summed residual is indistinguishable from
    // accumulated rounding in the column sums.
    const Scalar scale = phi.cwiseAbs().colwise().sum().maxCoeff();
    return Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale;
}

template <typename Scalar>
Eigen::PartialPivLU<MatrixX<Scalar>> checked_lu(const MatrixX<Scalar>& m, const char* what) {
    Eigen::PartialPivLU<MatrixX<Scalar>> lu(m);
    const Scalar rcond = lu.rcond();
    if (!(rcond > Scalar(1e-14))) {
        std::ostringstream os;
        os << what << " is singular (reciprocal condition estimate " << rcond << ")";
        throw SingularMatrixError(os.str());
    }
    return lu;
}

}  // namespace detail

struct SolveTrace {
    double residual_norm = 0.0;
    int iterations = 0;
};

// Damped Newton iterations with step halving on ||sum phi||_2. Returns theta_hat with
// ||sum phi||_inf <= tolerance, or throws ConvergenceError / SingularMatrixError.
template <typename Data, typename Scalar>
VectorX<Scalar> solve(const EstimatingFunction<Data, Scalar>& ef, const Data& data,
                      const std::type_identity_t<VectorX<Scalar>>& init,
                      const std::type_identity_t<SolverOptions<Scalar>>& options = {},
                      SolveTrace* trace = nullptr) {
    if (init.size() != ef.arity) {
        throw std::invalid_argument("solve: initial value has length " + std::to_string(init.size()) +
                                    ", expected " + std::to_string(ef.arity));
    }
    VectorX<Scalar> theta = init;
    MatrixX<Scalar> phi = ef.contributions(data, theta);
    if (phi.rows() == 0) throw std::invalid_argument("solve: empty dataset");
    VectorX<Scalar> total = phi.colwise().sum().transpose();
    if (!total.allFinite()) throw NonFiniteError("solve: estimating functions not finite at initial value", -1);

    auto report = [&](int it) {
        if (trace) {
            trace->residual_norm = double(total.template lpNorm<Eigen::Infinity>());
            trace->iterations = it;
        }
    };

    std::optional<Eigen::PartialPivLU<MatrixX<Scalar>>> last_lu;
    // Once within tolerance, a few chord steps with the last factorization take the
    // root down to the rounding level at no extra Jacobian cost.
    auto polish = [&] {
        if (!last_lu) return;
        for (int p = 0; p < 3; ++p) {
            const VectorX<Scalar> next = theta + last_lu->solve(-total);
            MatrixX<Scalar> next_phi = ef.contributions(data, next);
            if (!next_phi.allFinite()) return;
            const VectorX<Scalar> next_total = next_phi.colwise().sum().transpose();
            if (!(next_total.norm() < total.norm())) return;
            theta = next;
            phi = std::move(next_phi);
            total = next_total;
        }
    };

    for (int it = 0; it < options.max_iterations; ++it) {
        if (total.template lpNorm<Eigen::Infinity>() <= options.tolerance) {
            polish();
            report(it);
            return theta;
        }
        const MatrixX<Scalar> jac = numerical_jacobian(ef, data, theta);
        last_lu = detail::checked_lu<Scalar>(jac, "solve: Jacobian");
        const auto& lu = *last_lu;
        const VectorX<Scalar> step = lu.solve(-total);

        const Scalar current = total.norm();
        Scalar t = Scalar(1);
        bool accepted = false;
        VectorX<Scalar> candidate;
        MatrixX<Scalar> candidate_phi;
        for (int h = 0; h <= options.max_halvings; ++h, t /= Scalar(2)) {
            candidate = theta + t * step;
            candidate_phi = ef.contributions(data, candidate);
            if (!candidate_phi.allFinite()) continue;
            if (candidate_phi.colwise().sum().norm() < current) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No descent possible: either at the rounding floor of the sums or stuck.
            const Scalar resid = total.template lpNorm<Eigen::Infinity>();
            if (resid <= detail::rounding_floor<Scalar>(phi)) {
                report(it);
                return theta;
            }
            std::ostringstream os;
            os << "solve: line search failed after " << it << " iterations, residual norm " << resid;
            throw ConvergenceError(os.str(), double(resid), it);
        }
        if (options.on_step) options.on_step(theta, candidate);
        theta = std::move(candidate);
        phi = std::move(candidate_phi);
        total = phi.colwise().sum().transpose();
    }
    const Scalar resid = total.template lpNorm<Eigen::Infinity>();
    if (resid <= options.tolerance) {
        polish();
        report(options.max_iterations);
        return theta;
    }
    std::ostringstream os;
    os << "solve: no convergence after " << options.max_iterations << " iterations, residual norm "
       << resid;
    throw ConvergenceError(os.str(), double(resid), options.max_iterations);
}

// Sandwich covariance from per-unit contributions and the Jacobian of their sum.
// bread = -jacobian / n, filling = phi' phi / n, covariance = bread^-1 filling bread^-T / n.
template <typename Scalar>
MEstimate<Scalar> sandwich_from_parts(const VectorX<Scalar>& theta_hat, const MatrixX<Scalar>& phi,
                                      const MatrixX<Scalar>& jacobian) {
    const Eigen::Index n = phi.rows();
    if (n == 0) throw std::invalid_argument("sandwich: empty dataset");
    MEstimate<Scalar> est;
    est.theta_hat = theta_hat;
    est.n = n;
    est.bread = -jacobian / Scalar(n);
    est.filling = (phi.transpose() * phi) / Scalar(n);
    const auto lu = detail::checked_lu<Scalar>(est.bread, "sandwich: bread matrix");
    const MatrixX<Scalar> bread_inv = lu.inverse();
    est.covariance = bread_inv * est.filling * bread_inv.transpose() / Scalar(n);
    est.residual_norm = phi.colwise().sum().template lpNorm<Eigen::Infinity>();
    return est;
}

template <typename Data, typename Scalar>
MEstimate<Scalar> sandwich(const EstimatingFunction<Data, Scalar>& ef, const Data& data,
                           const std::type_identity_t<VectorX<Scalar>>& theta_hat) {
    const MatrixX<Scalar> phi = ef.contributions(data, theta_hat);
    if (!phi.allFinite()) throw NonFiniteError("sandwich: contributions not finite at theta_hat", -1);
    return sandwich_from_parts<Scalar>(theta_hat, phi, refined_jacobian(ef, data, theta_hat));
}

// solve followed by sandwich.
template <typename Data, typename Scalar>
MEstimate<Scalar> estimate(const EstimatingFunction<Data, Scalar>& ef, const Data& data,
                           const std::type_identity_t<VectorX<Scalar>>& init,
                      const std::type_identity_t<SolverOptions<Scalar>>& options = {}) {
    SolveTrace trace;
    const VectorX<Scalar> theta = solve(ef, data, init, options, &trace);
    MEstimate<Scalar> est = sandwich(ef, data, theta);
    est.converged = true;
    est.iterations = trace.iterations;
    return est;
}

}  // namespace transport
