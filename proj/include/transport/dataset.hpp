#pragma once
// Combined target-population (R = 1) and trial (R = 2) observations.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace transport {

enum class Variable { R, A, Y, V, W };

std::string_view variable_name(Variable var);
std::optional<Variable> parse_variable(std::string_view name);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double x) { return std::isnan(x); }

inline constexpr int kTarget = 1;
inline constexpr int kTrial = 2;

struct Observation {
    int r = kTarget;
    double a = kMissing;
    double y = kMissing;
    double v = kMissing;
    double w = kMissing;

    double get(Variable var) const;
};

// Empty when the row satisfies its population's rules, otherwise the violated rule.
std::string row_violation(const Observation& o);

// Column store. Missing A / Y are NaN. All columns have the same length.
struct StudyDataset {
    Eigen::VectorXd R, A, Y, V, W;

    Eigen::Index size() const { return R.size(); }
    bool empty() const { return size() == 0; }
    const Eigen::VectorXd& column(Variable var) const;
    Observation row(Eigen::Index i) const;

    // 1.0 where the predicate holds, 0.0 elsewhere.
    Eigen::ArrayXd target_mask() const { return (R.array() == kTarget).cast<double>(); }
    Eigen::ArrayXd trial_mask() const { return (R.array() == kTrial).cast<double>(); }
    Eigen::ArrayXd male_mask() const { return (W.array() == 0.0).cast<double>(); }

    Eigen::Index count_target() const { return Eigen::Index(target_mask().sum()); }
    Eigen::Index count_trial() const { return Eigen::Index(trial_mask().sum()); }

    // Throws DataError naming the first violated rule:
    //   trial rows have non-missing binary A and Y,
    //   target rows have non-missing V and binary W,
    //   every R is 1 or 2, and both populations are present.
    void validate() const;

    static StudyDataset from_rows(const std::vector<Observation>& rows);
    std::vector<Observation> rows() const;
    StudyDataset select(const std::vector<Eigen::Index>& indices) const;
    StudyDataset filter(const Eigen::ArrayXd& mask) const;
    StudyDataset population(int r) const { return filter((R.array() == r).cast<double>()); }
};

// Rows of `first` followed by rows of `second`.
StudyDataset concat(const StudyDataset& first, const StudyDataset& second);

}  // namespace transport
