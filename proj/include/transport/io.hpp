#pragma once
// File formats: the R,A,Y,V,W data CSV, JSON effect records, synthesis
// configuration files and the one-column draws CSV.

#include "transport/dataset.hpp"
#include "transport/dists.hpp"
#include "transport/estimators.hpp"

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace transport {

// Header must name V and W, and R unless `population` is given (then R is
// inferred; an R column, if present, must agree). A and Y columns may be absent
// from target-only files. Empty fields are missing values. Each row is checked
// against its population's rules; errors name the offending line. Presence of
// both populations is left to StudyDataset::validate.
StudyDataset read_dataset_csv(std::istream& in, const std::string& source, std::optional<int> population = {});
StudyDataset read_dataset_csv(const std::filesystem::path& path, std::optional<int> population = {});
void write_dataset_csv(std::ostream& out, const StudyDataset& data);

// Shortest decimal text that reads back to the same double.
std::string format_number(double x);

nlohmann::ordered_json to_json(const EffectEstimate& e);
nlohmann::ordered_json to_json(const Bounds& b);
nlohmann::ordered_json to_json(const std::vector<StratumCount>& flagged, const std::vector<Variable>& strata);

void write_draws_csv(std::ostream& out, std::span<const double> draws);

// Tagged distribution records:
//   {"kind": "point_mass", "value": 0}
//   {"kind": "trapezoid", "min": -2, "mode1": -1, "mode2": 1, "max": 2}
//   {"kind": "normal", "mu": -0.016, "sigma": 0.1761}
//   {"kind": "multivariate_normal", "mu": [..], "cov": [[..], ..]}
ParameterDistribution distribution_from_json(const nlohmann::json& j);

// Synthesis configuration file:
//   {"b0": <dist>, "b1": <dist>}  or  {"joint": {"mu": [m0, m1], "cov": [[..], [..]]}}
// plus optional "outcome_design", "selection_design" (formula string lists),
// "reps" and "seed".
struct SynthesisConfig {
    ShiftModel shift;
    std::optional<DesignSpec> outcome_design;
    std::optional<DesignSpec> selection_design;
    std::optional<std::int64_t> reps;
    std::optional<std::uint64_t> seed;
};

SynthesisConfig synthesis_config_from_json(const nlohmann::json& j);
SynthesisConfig read_synthesis_config(const std::filesystem::path& path);

}  // namespace transport
