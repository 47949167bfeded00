#include "transport/dataset.hpp"

#include "transport/errors.hpp"

#include <stdexcept>

namespace transport {

std::string_view variable_name(Variable var) {
    switch (var) {
        case Variable::R: return "R";
        case Variable::A: return "A";
        case Variable::Y: return "Y";
        case Variable::V: return "V";
        case Variable::W: return "W";
    }
    return "?";
}

std::optional<Variable> parse_variable(std::string_view name) {
    if (name == "R") return Variable::R;
    if (name == "A") return Variable::A;
    if (name == "Y") return Variable::Y;
    if (name == "V") return Variable::V;
    if (name == "W") return Variable::W;
    return std::nullopt;
}

double Observation::get(Variable var) const {
    switch (var) {
        case Variable::R: return r;
        case Variable::A: return a;
        case Variable::Y: return y;
        case Variable::V: return v;
        case Variable::W: return w;
    }
    return kMissing;
}

const Eigen::VectorXd& StudyDataset::column(Variable var) const {
    switch (var) {
        case Variable::R: return R;
        case Variable::A: return A;
        case Variable::Y: return Y;
        case Variable::V: return V;
        case Variable::W: return W;
    }
    throw std::logic_error("unknown variable");
}

Observation StudyDataset::row(Eigen::Index i) const {
    return Observation{int(R(i)), A(i), Y(i), V(i), W(i)};
}

namespace {

bool is_binary(double x) { return x == 0.0 || x == 1.0; }

std::string row_label(Eigen::Index i) { return "row " + std::to_string(i + 1); }

}  // namespace

std::string row_violation(const Observation& o) {
    const bool trial = o.r == kTrial;
    if (o.r != kTarget && !trial) return "R must be 1 (target) or 2 (trial)";
    const std::string who = trial ? "trial rows (R=2)" : "target rows (R=1)";
    if (trial && (is_missing(o.a) || !is_binary(o.a))) return who + " must have non-missing A in {0,1}";
    if (trial && (is_missing(o.y) || !is_binary(o.y))) return who + " must have non-missing Y in {0,1}";
    if (is_missing(o.v) || !std::isfinite(o.v)) return who + " must have non-missing V";
    if (is_missing(o.w) || !is_binary(o.w)) return who + " must have W in {0,1}";
    return {};
}

void StudyDataset::validate() const {
    const Eigen::Index n = size();
    if (A.size() != n || Y.size() != n || V.size() != n || W.size() != n) {
        throw DataError("dataset columns have unequal lengths");
    }
    bool any_target = false, any_trial = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Observation o = row(i);
        if (const std::string problem = row_violation(o); !problem.empty()) throw DataError(row_label(i) + ": " + problem);
        any_target |= o.r == kTarget;
        any_trial |= o.r == kTrial;
    }
    if (!any_target) throw DataError("dataset needs at least one target row (R=1)");
    if (!any_trial) throw DataError("dataset needs at least one trial row (R=2)");
}

StudyDataset StudyDataset::from_rows(const std::vector<Observation>& rows) {
    const auto n = Eigen::Index(rows.size());
    StudyDataset d;
    d.R.resize(n);
    d.A.resize(n);
    d.Y.resize(n);
    d.V.resize(n);
    d.W.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& o = rows[std::size_t(i)];
        d.R(i) = o.r;
        d.A(i) = o.a;
        d.Y(i) = o.y;
        d.V(i) = o.v;
        d.W(i) = o.w;
    }
    return d;
}

std::vector<Observation> StudyDataset::rows() const {
    std::vector<Observation> out;
    out.reserve(std::size_t(size()));
    for (Eigen::Index i = 0; i < size(); ++i) out.push_back(row(i));
    return out;
}

StudyDataset StudyDataset::select(const std::vector<Eigen::Index>& indices) const {
    StudyDataset d;
    d.R = R(indices);
    d.A = A(indices);
    d.Y = Y(indices);
    d.V = V(indices);
    d.W = W(indices);
    return d;
}

StudyDataset StudyDataset::filter(const Eigen::ArrayXd& mask) const {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < size(); ++i) {
        if (mask(i) != 0.0) keep.push_back(i);
    }
    return select(keep);
}

StudyDataset concat(const StudyDataset& first, const StudyDataset& second) {
    auto join = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        Eigen::VectorXd out(a.size() + b.size());
        out << a, b;
        return out;
    };
    StudyDataset d;
    d.R = join(first.R, second.R);
    d.A = join(first.A, second.A);
    d.Y = join(first.Y, second.Y);
    d.V = join(first.V, second.V);
    d.W = join(first.W, second.W);
    return d;
}

}  // namespace transport
