#include "transport/glm.hpp"

#include "transport/errors.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace transport {

namespace {

std::string strip(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c != ' ' && c != '\t') out.push_back(c);
    }
    return out;
}

Variable require_variable(const std::string& name, const std::string& formula) {
    if (auto v = parse_variable(name)) return *v;
    throw DataError("design term '" + formula + "': unknown variable '" + name + "'");
}

Term parse_term(const std::string& raw) {
    const std::string s = strip(raw);
    if (s.empty()) throw DataError("design term is empty");
    if (s == "1") return Term::intercept();

    if (auto pos = s.find("*I("); pos != std::string::npos) {
        // V*I(V>25)
        const std::string var = s.substr(0, pos);
        const std::string inner = s.substr(pos + 3);
        const auto gt = inner.find('>');
        if (gt == std::string::npos || inner.back() != ')') {
            throw DataError("design term '" + raw + "': expected the form V*I(V>c)");
        }
        const std::string cond_var = inner.substr(0, gt);
        const std::string cut = inner.substr(gt + 1, inner.size() - gt - 2);
        if (cond_var != var) throw DataError("design term '" + raw + "': threshold must use the same variable");
        double cutpoint = 0.0;
        try {
            std::size_t used = 0;
            cutpoint = std::stod(cut, &used);
            if (used != cut.size()) throw std::invalid_argument(cut);
        } catch (const std::exception&) {
            throw DataError("design term '" + raw + "': bad cutpoint '" + cut + "'");
        }
        return Term::threshold(require_variable(var, raw), cutpoint);
    }
    if (auto pos = s.find("^2"); pos != std::string::npos && pos + 2 == s.size()) {
        return Term::quadratic(require_variable(s.substr(0, pos), raw));
    }
    if (auto pos = s.find_first_of("*:"); pos != std::string::npos) {
        return Term::interaction(require_variable(s.substr(0, pos), raw), require_variable(s.substr(pos + 1), raw));
    }
    return Term::linear(require_variable(s, raw));
}

double term_value(const Term& term, const std::function<double(Variable)>& get) {
    switch (term.kind) {
        case Term::Kind::Intercept: return 1.0;
        case Term::Kind::Linear: return get(term.first);
        case Term::Kind::Quadratic: return get(term.first) * get(term.first);
        case Term::Kind::Interaction: return get(term.first) * get(term.second);
        case Term::Kind::ThresholdInteraction: {
            const double x = get(term.first);
            return x > term.cutpoint ? x : 0.0;
        }
    }
    return 0.0;
}

Eigen::ArrayXd term_column(const Term& term, const std::function<Eigen::ArrayXd(Variable)>& get, Eigen::Index n) {
    switch (term.kind) {
        case Term::Kind::Intercept: return Eigen::ArrayXd::Ones(n);
        case Term::Kind::Linear: return get(term.first);
        case Term::Kind::Quadratic: return get(term.first).square();
        case Term::Kind::Interaction: return get(term.first) * get(term.second);
        case Term::Kind::ThresholdInteraction: {
            const Eigen::ArrayXd x = get(term.first);
            return (x > term.cutpoint).select(x, Eigen::ArrayXd::Zero(n));
        }
    }
    return Eigen::ArrayXd::Zero(n);
}

}  // namespace

std::string Term::label() const {
    const std::string a(variable_name(first));
    switch (kind) {
        case Kind::Intercept: return "1";
        case Kind::Linear: return a;
        case Kind::Quadratic: return a + "^2";
        case Kind::Interaction: return a + "*" + std::string(variable_name(second));
        case Kind::ThresholdInteraction: {
            std::ostringstream os;
            os << a << "*I(" << a << ">" << cutpoint << ")";
            return os.str();
        }
    }
    return "?";
}

bool Term::uses(Variable v) const {
    switch (kind) {
        case Kind::Intercept: return false;
        case Kind::Interaction: return first == v || second == v;
        default: return first == v;
    }
}

DesignSpec DesignSpec::parse(const std::vector<std::string>& formula) {
    DesignSpec spec;
    for (const auto& t : formula) spec.terms.push_back(parse_term(t));
    if (spec.terms.empty()) throw DataError("design has no terms");
    return spec;
}

std::vector<std::string> DesignSpec::labels() const {
    std::vector<std::string> out;
    for (const auto& t : terms) out.push_back(t.label());
    return out;
}

bool DesignSpec::uses(Variable v) const {
    return std::any_of(terms.begin(), terms.end(), [v](const Term& t) { return t.uses(v); });
}

Eigen::MatrixXd design_matrix(const DesignSpec& spec, const StudyDataset& data, const Overrides& overrides) {
    const Eigen::Index n = data.size();
    auto get = [&](Variable v) -> Eigen::ArrayXd {
        if (auto it = overrides.find(v); it != overrides.end()) return Eigen::ArrayXd::Constant(n, it->second);
        return data.column(v).array();
    };
    Eigen::MatrixXd x(n, spec.width());
    for (Eigen::Index j = 0; j < spec.width(); ++j) {
        x.col(j) = term_column(spec.terms[std::size_t(j)], get, n).matrix();
    }
    return x;
}

Eigen::RowVectorXd design_row(const DesignSpec& spec, const Observation& row, const Overrides& overrides) {
    auto get = [&](Variable v) -> double {
        if (auto it = overrides.find(v); it != overrides.end()) return it->second;
        const double value = row.get(v);
        if (is_missing(value)) {
            throw DataError("design: variable " + std::string(variable_name(v)) +
                            " is missing and not overridden");
        }
        return value;
    };
    Eigen::RowVectorXd x(spec.width());
    for (Eigen::Index j = 0; j < spec.width(); ++j) x(j) = term_value(spec.terms[std::size_t(j)], get);
    return x;
}

Eigen::MatrixXd zero_masked_rows(Eigen::MatrixXd x, const Eigen::ArrayXd& mask) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (mask(i) == 0.0) x.row(i).setZero();
    }
    return x;
}

Eigen::MatrixXd logistic_score(const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::ArrayXd& weight,
                               const Eigen::VectorXd& beta) {
    const Eigen::ArrayXd resid = weight * (y - expit((x * beta).array()));
    return resid.matrix().asDiagonal() * x;
}

double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::ArrayXd& weight,
                       const Eigen::VectorXd& beta) {
    const Eigen::ArrayXd eta = (x * beta).array();
    // log(1 + exp(eta)) computed stably
    const Eigen::ArrayXd softplus = eta.max(0.0) + (-eta.abs()).exp().log1p();
    return (weight * (y * eta - softplus)).sum();
}

double FittedLogistic::predict(const Observation& row, const Overrides& overrides) const {
    return expit(design_row(design, row, overrides).dot(coefficients));
}

Eigen::ArrayXd FittedLogistic::predict(const StudyDataset& data, const Overrides& overrides) const {
    const Eigen::MatrixXd x = design_matrix(design, data, overrides);
    if (!x.allFinite()) throw DataError("predict: a design variable is missing and not overridden");
    return expit((x * coefficients).array());
}

std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&)> separation_guard(Eigen::MatrixXd x,
                                                                                  Eigen::ArrayXd y,
                                                                                  Eigen::ArrayXd weight,
                                                                                  Eigen::Index offset) {
    return [x = std::move(x), y = std::move(y), weight = std::move(weight), offset](const Eigen::VectorXd& prev,
                                                                                   const Eigen::VectorXd& next) {
        const Eigen::VectorXd b_next = next.segment(offset, x.cols());
        if (b_next.cwiseAbs().maxCoeff() <= kSeparationCoefficientLimit) return;
        const Eigen::VectorXd b_prev = prev.segment(offset, x.cols());
        if (logistic_loglik(x, y, weight, b_next) >= logistic_loglik(x, y, weight, b_prev)) {
            throw SeparationError("logistic model: coefficients diverging (|coefficient| > 30 with "
                                  "non-decreasing likelihood); the outcome is separated by the design");
        }
    };
}

namespace {

struct LogisticProblem {
    Eigen::MatrixXd x;
    Eigen::ArrayXd y;
    Eigen::ArrayXd w;
};

}  // namespace

FittedLogistic fit_logistic(const DesignSpec& design, const StudyDataset& data, const Eigen::VectorXd& outcome,
                            const std::optional<Eigen::VectorXd>& weights) {
    const Eigen::Index n = data.size();
    if (n == 0) throw EstimationError("fit_logistic: no rows to fit");
    if (outcome.size() != n) throw std::invalid_argument("fit_logistic: outcome length mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(outcome(i) == 0.0 || outcome(i) == 1.0)) {
            throw DataError("fit_logistic: outcome must be binary (row " + std::to_string(i + 1) + ")");
        }
    }
    LogisticProblem problem{design_matrix(design, data), outcome.array(), Eigen::ArrayXd::Ones(n)};
    if (weights) {
        if (weights->size() != n) throw std::invalid_argument("fit_logistic: weight length mismatch");
        if (!weights->allFinite() || (weights->array() <= 0.0).any()) {
            throw DataError("fit_logistic: weights must be positive and finite");
        }
        problem.w = weights->array();
    }
    if (!problem.x.allFinite()) throw DataError("fit_logistic: design variables missing for fitted rows");
    const Eigen::Index p = problem.x.cols();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(problem.x);
    if (qr.rank() < p) {
        throw SingularMatrixError("fit_logistic: design matrix is rank deficient (rank " +
                                  std::to_string(qr.rank()) + " < " + std::to_string(p) + ")");
    }

    EstimatingFunction<LogisticProblem> ef{p, [](const LogisticProblem& d, const Eigen::VectorXd& beta) {
                                               return logistic_score(d.x, d.y, d.w, beta);
                                           }};
    SolverOptions<double> options;
    options.on_step = separation_guard(problem.x, problem.y, problem.w);
    const auto est = estimate(ef, problem, Eigen::VectorXd::Zero(p), options);

    FittedLogistic fit;
    fit.coefficients = est.theta_hat;
    fit.covariance = est.covariance;
    fit.design = design;
    fit.n_used = n;
    return fit;
}

FittedLogistic fit_logistic(const DesignSpec& design, const StudyDataset& data, Variable outcome,
                            const std::optional<Eigen::VectorXd>& weights) {
    return fit_logistic(design, data, data.column(outcome), weights);
}

}  // namespace transport
