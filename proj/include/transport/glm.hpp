#pragma once
// Logistic models written as estimating functions, and the design-matrix
// vocabulary used by every nuisance model.

#include "transport/dataset.hpp"
#include "transport/mest.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

namespace transport {

// exp(x) / (1 + exp(x)) without overflow for large |x|.
template <typename Scalar>
    requires std::is_floating_point_v<Scalar>
Scalar expit(Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1> expit(const Eigen::ArrayBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    const auto e = (-x.abs()).exp().eval();
    return (x >= Scalar(0)).select(Scalar(1) / (Scalar(1) + e), e / (Scalar(1) + e));
}

template <typename Scalar>
    requires std::is_floating_point_v<Scalar>
Scalar logit(Scalar p) {
    return std::log(p / (Scalar(1) - p));
}

struct Term {
    enum class Kind { Intercept, Linear, Quadratic, Interaction, ThresholdInteraction };

    Kind kind = Kind::Intercept;
    Variable first = Variable::V;
    Variable second = Variable::V;
    double cutpoint = 0.0;  // ThresholdInteraction: first * I(second > cutpoint)

    static Term intercept() { return {}; }
    static Term linear(Variable v) { return {Kind::Linear, v, v, 0.0}; }
    static Term quadratic(Variable v) { return {Kind::Quadratic, v, v, 0.0}; }
    static Term interaction(Variable a, Variable b) { return {Kind::Interaction, a, b, 0.0}; }
    static Term threshold(Variable v, double cut) { return {Kind::ThresholdInteraction, v, v, cut}; }

    std::string label() const;
    bool uses(Variable v) const;
    bool operator==(const Term&) const = default;
};

// Ordered list of model terms. Formula strings understood by parse():
//   "1", "A", "V^2", "A*W" (or "A:W"), "V*I(V>25)".
struct DesignSpec {
    std::vector<Term> terms;

    static DesignSpec parse(const std::vector<std::string>& formula);
    std::vector<std::string> labels() const;
    Eigen::Index width() const { return Eigen::Index(terms.size()); }
    bool uses(Variable v) const;
    bool operator==(const DesignSpec&) const = default;
};

// Variables forced to a value when building a design row, e.g. {A: 1, W: 0}.
using Overrides = std::map<Variable, double>;

// n x p design matrix. Unresolvable (missing) values stay NaN; callers that mask
// rows out of an estimating function should pass them through zero_masked_rows.
Eigen::MatrixXd design_matrix(const DesignSpec& spec, const StudyDataset& data, const Overrides& overrides = {});
// Throws DataError if a variable the design needs is missing and not overridden.
Eigen::RowVectorXd design_row(const DesignSpec& spec, const Observation& row, const Overrides& overrides = {});

// Rows where mask == 0 are set to zero (so NaN placeholders cannot leak into sums).
Eigen::MatrixXd zero_masked_rows(Eigen::MatrixXd x, const Eigen::ArrayXd& mask);

// Per-unit score of a (weighted, masked) logistic model:
//   weight_i * (y_i - expit(x_i' beta)) * x_i.
// `weight` carries both indicator masks and analysis weights.
Eigen::MatrixXd logistic_score(const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::ArrayXd& weight,
                               const Eigen::VectorXd& beta);

double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::ArrayXd& weight,
                       const Eigen::VectorXd& beta);

struct FittedLogistic {
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd covariance;  // robust (sandwich)
    DesignSpec design;
    Eigen::Index n_used = 0;

    double predict(const Observation& row, const Overrides& overrides = {}) const;
    Eigen::ArrayXd predict(const StudyDataset& data, const Overrides& overrides = {}) const;
};

// Solves sum_i w_i [y_i - expit(x_i' alpha)] x_i = 0 through the M-estimation
// engine. Every row of `data` participates; filter beforehand to fit a subset.
// Throws SeparationError when coefficients diverge, SingularMatrixError on a
// rank-deficient design.
FittedLogistic fit_logistic(const DesignSpec& design, const StudyDataset& data, const Eigen::VectorXd& outcome,
                            const std::optional<Eigen::VectorXd>& weights = std::nullopt);
FittedLogistic fit_logistic(const DesignSpec& design, const StudyDataset& data, Variable outcome,
                            const std::optional<Eigen::VectorXd>& weights = std::nullopt);

// Options for the separation guard: abort once any |coefficient| exceeds
// `limit` while the log-likelihood keeps increasing.
inline constexpr double kSeparationCoefficientLimit = 30.0;

// on_step hook enforcing the separation guard on the logistic block occupying
// parameters [offset, offset + x.cols()).
std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&)> separation_guard(
    Eigen::MatrixXd x, Eigen::ArrayXd y, Eigen::ArrayXd weight, Eigen::Index offset = 0);

}  // namespace transport
