#include "catch_amalgamated.hpp"

#include "test_support.hpp"
#include "transport/errors.hpp"
#include "transport/estimators.hpp"
#include "transport/io.hpp"

#include <sstream>

using namespace transport;
using namespace transport::testing;

namespace {

std::string error_of(const std::string& csv, std::optional<int> population = {}) {
    std::istringstream in(csv);
    try {
        read_dataset_csv(in, "data.csv", population);
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("dataset csv round-trip", "[io]") {
    const StudyDataset d = simulated_study(1, 50, 60);
    std::ostringstream out;
    write_dataset_csv(out, d);
    CHECK(out.str().rfind("R,A,Y,V,W\n", 0) == 0);
    CHECK(out.str().find("\n1,,,") != std::string::npos);

    std::istringstream in(out.str());
    const StudyDataset back = read_dataset_csv(in, "mem");
    CHECK(back.R == d.R);
    CHECK(back.V == d.V);
    CHECK(back.W == d.W);
    CHECK(back.A.array().isNaN().cwiseEqual(d.A.array().isNaN()).all());
    CHECK(back.A.array().isNaN().select(0.0, back.A.array()).isApprox(d.A.array().isNaN().select(0.0, d.A.array())));

    // Estimates from the re-read data are identical.
    const auto x = restrict_population_gcomp(d, default_outcome_design());
    const auto y = restrict_population_gcomp(back, default_outcome_design());
    CHECK(x.rd == y.rd);
    CHECK(x.ci_upper == y.ci_upper);
}

TEST_CASE("dataset csv with inferred population and column order", "[io]") {
    std::istringstream trial("V,W,A,Y\n20,0,1,0\n25,0,0,1\n");
    const StudyDataset t = read_dataset_csv(trial, "trial.csv", kTrial);
    CHECK(t.size() == 2);
    CHECK((t.R.array() == kTrial).all());
    CHECK(t.A(0) == 1.0);
    CHECK(t.V(1) == 25.0);

    std::istringstream target("V,W\n22,1\n");
    const StudyDataset c = read_dataset_csv(target, "clinic.csv", kTarget);
    CHECK(c.R(0) == kTarget);
    CHECK(std::isnan(c.A(0)));

    std::istringstream crlf("R,A,Y,V,W\r\n1,,,20,1\r\n2,0,1,20,0\r\n");
    CHECK(read_dataset_csv(crlf, "crlf.csv").size() == 2);
}

TEST_CASE("dataset csv errors name the line and rule", "[io]") {
    CHECK(error_of("R,A,Y,V,W\n1,,,20,1\n2,0,x,20,0\n").find("line 3") != std::string::npos);
    CHECK(error_of("R,A,Y,V,W\n1,,,20,1\n2,0,1,20\n").find("line 3") != std::string::npos);
    CHECK(error_of("R,A,Y,V\n1,,,20\n").find("W") != std::string::npos);
    CHECK(error_of("R,A,Y,V,W\n1,,,20,1\n2,,1,20,0\n").find("A") != std::string::npos);
    CHECK(error_of("R,A,Y,V,W\n3,,,20,1\n").find("R") != std::string::npos);
    std::istringstream target_only("R,A,Y,V,W\n1,,,20,1\n");
    CHECK_THROWS_AS(read_dataset_csv(target_only, "t.csv").validate(), DataError);
    CHECK(!error_of("R,A,Y,V,W\n1,,,20,1\n", kTrial).empty());  // R disagrees with inferred population
    CHECK(!error_of("").empty());
}

TEST_CASE("numbers format to shortest round-trip text", "[io]") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(2.0) == "2");
    const double x = 0.216696812345678;
    CHECK(std::stod(format_number(x)) == x);
}

TEST_CASE("effect estimate json", "[io]") {
    EffectEstimate e;
    e.method = "restrict-pop-g";
    e.rd = 0.3;
    e.ci_lower = 0.1;
    e.ci_upper = 0.5;
    e.risk1 = 0.5;
    e.risk0 = 0.2;
    e.se = 0.1;
    const auto j = to_json(e);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    CHECK(keys == std::vector<std::string>{"method", "rd", "ci_lower", "ci_upper", "risk1", "risk0", "se"});
    CHECK(j["se"].get<double>() == 0.1);

    e.se.reset();
    e.draws = {0.1, 0.2, 0.3};
    const auto s = to_json(e);
    CHECK(!s.contains("se"));
    CHECK(s["n_draws"].get<int>() == 3);

    const auto b = to_json(Bounds{-0.4, 0.9});
    CHECK(b["method"] == "bounds");
    CHECK(b["lower"].get<double>() == -0.4);

    std::ostringstream draws;
    write_draws_csv(draws, e.draws);
    CHECK(draws.str() == "rd\n0.1\n0.2\n0.3\n");
}

TEST_CASE("diagnostic json", "[io]") {
    const StudyDataset d = simulated_study(2, 200, 200);
    const auto flagged = positivity_diagnostic(d, {Variable::W});
    const auto j = to_json(flagged, {Variable::W});
    CHECK(j["method"] == "diagnose");
    CHECK(j["positivity_holds"] == false);
    REQUIRE(j["flagged"].size() == 1);
    CHECK(j["flagged"][0]["stratum"]["W"].get<double>() == 1.0);
    CHECK(j["flagged"][0]["trial_count"].get<int>() == 0);
}

TEST_CASE("distribution records", "[io]") {
    using nlohmann::json;
    CHECK(std::get<PointMass>(distribution_from_json(json::parse(R"({"kind":"point_mass","value":0.5})"))).value == 0.5);
    CHECK(std::get<PointMass>(distribution_from_json(json(0.25))).value == 0.25);
    const auto t = std::get<Trapezoid>(
        distribution_from_json(json::parse(R"({"kind":"trapezoid","min":-2,"mode1":-1,"mode2":1,"max":2})")));
    CHECK(t.mode2 == 1.0);
    const auto n = std::get<Normal>(distribution_from_json(json::parse(R"({"kind":"normal","mu":-0.016,"sigma":0.1761})")));
    CHECK(n.sigma == 0.1761);
    const auto m = std::get<MultivariateNormal>(distribution_from_json(
        json::parse(R"({"kind":"multivariate_normal","mu":[0,1],"cov":[[1,0.2],[0.2,2]]})")));
    CHECK(m.cov(1, 1) == 2.0);

    CHECK_THROWS_AS(distribution_from_json(json::parse(R"({"kind":"cauchy"})")), DataError);
    CHECK_THROWS_AS(distribution_from_json(json::parse(R"({"kind":"normal","mu":0})")), DataError);
    CHECK_THROWS_AS(distribution_from_json(json::parse(R"({"kind":"trapezoid","min":2,"mode1":1,"mode2":1,"max":0})")),
                    DataError);
}

TEST_CASE("synthesis config files", "[io]") {
    using nlohmann::json;
    const auto pair = synthesis_config_from_json(json::parse(R"({
        "b0": {"kind": "normal", "mu": -0.016, "sigma": 0.1761},
        "b1": {"kind": "normal", "mu": -0.627, "sigma": 0.2227},
        "outcome_design": ["1", "A", "V", "V^2"],
        "reps": 10000, "seed": 42})"));
    CHECK(pair.shift.b0.has_value());
    CHECK(pair.outcome_design->width() == 4);
    CHECK(*pair.reps == 10000);
    CHECK(*pair.seed == 42u);

    const auto joint = synthesis_config_from_json(json::parse(R"({"joint": {"mu": [0.1, -0.6], "cov": [[0.03, 0.01], [0.01, 0.05]]}})"));
    REQUIRE(joint.shift.joint.has_value());
    CHECK(joint.shift.joint->mu(1) == -0.6);

    CHECK_THROWS_AS(synthesis_config_from_json(json::parse(R"({"b0": 0})")), DataError);
    CHECK_THROWS_AS(synthesis_config_from_json(json::parse(R"({"b0": 0, "b1": 0, "joint": {"mu": [0, 0], "cov": [[1, 0], [0, 1]]}})")),
                    DataError);
    CHECK_THROWS_AS(synthesis_config_from_json(json::parse(R"({"b0": 0, "b1": 0, "reps": 0})")), DataError);
    CHECK_THROWS_AS(read_synthesis_config("/nonexistent/config.json"), DataError);
}
