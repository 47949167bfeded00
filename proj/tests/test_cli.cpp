#include "catch_amalgamated.hpp"

#include "test_support.hpp"
#include "transport/cli.hpp"
#include "transport/estimators.hpp"
#include "transport/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace transport;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "transport");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("transport_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

// Writes generated data as one combined file plus split trial / target files.
void write_study(const TempDir& dir, std::uint64_t seed) {
    REQUIRE(run_cli({"generate", "--seed", std::to_string(seed), "-o", dir / "data.csv"}).code == 0);
    const StudyDataset d = read_dataset_csv(fs::path(dir / "data.csv"));
    std::ostringstream trial, target;
    write_dataset_csv(trial, d.population(kTrial));
    write_dataset_csv(target, d.population(kTarget));
    spit(dir / "trial.csv", trial.str());
    spit(dir / "clinic.csv", target.str());
    spit(dir / "synth.json", R"({"b0": {"kind": "normal", "mu": -0.016, "sigma": 0.1761},
                                 "b1": {"kind": "normal", "mu": -0.627, "sigma": 0.2227}})");
}

}  // namespace

TEST_CASE("estimate with a synthesis config writes JSON and draws", "[cli]") {
    TempDir dir;
    write_study(dir, 3);
    const Result r = run_cli({"estimate", "--method", "synth-g", "--trial", dir / "trial.csv", "--target",
                              dir / "clinic.csv", "--config", dir / "synth.json", "--reps", "2000", "--seed", "42",
                              "--draws", dir / "draws.csv"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["method"] == "synth-g");
    CHECK(j["ci_lower"].get<double>() <= j["rd"].get<double>());
    CHECK(j["rd"].get<double>() <= j["ci_upper"].get<double>());
    CHECK(j["n_draws"].get<int>() == 2000);
    const std::string draws = slurp(dir / "draws.csv");
    CHECK(draws.rfind("rd\n", 0) == 0);
    CHECK(std::count(draws.begin(), draws.end(), '\n') == 2001);

    // Byte-identical on repeat, and across worker counts.
    const Result again = run_cli({"estimate", "--method", "synth-g", "--trial", dir / "trial.csv", "--target",
                                  dir / "clinic.csv", "--config", dir / "synth.json", "--reps", "2000", "--seed",
                                  "42", "--workers", "3"});
    CHECK(again.out == r.out);
}

TEST_CASE("combined and split inputs give the same estimates", "[cli]") {
    TempDir dir;
    write_study(dir, 4);
    const Result combined = run_cli({"estimate", "-m", "restrict-pop-g,restrict-cov-ipw", "--data", dir / "data.csv"});
    const Result split = run_cli({"estimate", "-m", "restrict-pop-g,restrict-cov-ipw", "--trial", dir / "trial.csv",
                                  "--target", dir / "clinic.csv"});
    REQUIRE(combined.code == 0);
    REQUIRE(split.code == 0);
    CHECK(combined.out == split.out);
    const auto j = nlohmann::json::parse(combined.out);
    REQUIRE(j.is_array());
    CHECK(j.size() == 2);
    CHECK(j[0].contains("se"));

    // Same answer as the in-memory pipeline on the same generated data.
    const StudyDataset d = testing::simulated_study(4);
    const auto direct = restrict_population_gcomp(d, default_outcome_design());
    CHECK(j[0]["rd"].get<double>() == direct.rd);
}

TEST_CASE("diagnose and bounds", "[cli]") {
    TempDir dir;
    write_study(dir, 5);
    const Result diag = run_cli({"estimate", "--method", "diagnose", "--strata", "W", "--data", dir / "data.csv"});
    REQUIRE(diag.code == 0);
    const auto j = nlohmann::json::parse(diag.out);
    CHECK(j["flagged"].size() == 1);
    CHECK(j["flagged"][0]["trial_count"].get<int>() == 0);

    const Result bounds = run_cli({"estimate", "--method", "bounds", "--data", dir / "data.csv", "-o", dir / "b.json"});
    REQUIRE(bounds.code == 0);
    const auto b = nlohmann::json::parse(slurp(dir / "b.json"));
    CHECK(b["lower"].get<double>() < b["upper"].get<double>());
}

TEST_CASE("several synthesis methods get separate draws files", "[cli]") {
    TempDir dir;
    write_study(dir, 6);
    const Result r = run_cli({"estimate", "-m", "synth-g,synth-ipw", "--data", dir / "data.csv", "--config",
                              dir / "synth.json", "--reps", "200", "--draws", dir / "draws.csv"});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "draws_synth-g.csv"));
    CHECK(fs::exists(dir / "draws_synth-ipw.csv"));
}

TEST_CASE("exit codes", "[cli]") {
    TempDir dir;
    write_study(dir, 7);
    CHECK(run_cli({}).code == cli::kUsage);
    CHECK(run_cli({"estimate", "--method", "nonsense", "--data", dir / "data.csv"}).code == cli::kUsage);
    CHECK(run_cli({"simulate", "--iterations", "0"}).code == cli::kUsage);
    CHECK(run_cli({"estimate", "--help"}).code == cli::kOk);

    spit(dir / "bad.csv", "R,A,Y,V,W\n1,,,20,1\n2,0,maybe,20,0\n");
    const Result bad = run_cli({"estimate", "-m", "restrict-pop-g", "--data", dir / "bad.csv"});
    CHECK(bad.code == cli::kDataError);
    CHECK(bad.err.find("line 3") != std::string::npos);

    spit(dir / "no_trial_a.csv", "R,A,Y,V,W\n1,,,20,1\n2,,1,20,0\n");
    const Result rule = run_cli({"estimate", "-m", "restrict-pop-g", "--data", dir / "no_trial_a.csv"});
    CHECK(rule.code == cli::kDataError);
    CHECK(rule.err.find("A") != std::string::npos);

    CHECK(run_cli({"estimate", "-m", "synth-g", "--data", dir / "data.csv"}).code == cli::kDataError);
    CHECK(run_cli({"estimate", "-m", "restrict-pop-g", "--data", dir / "missing.csv"}).code == cli::kDataError);

    // No target men: the population-restricted estimator cannot run.
    spit(dir / "women.csv", "R,A,Y,V,W\n1,,,20,1\n1,,,22,1\n2,0,1,20,0\n2,1,0,21,0\n2,0,0,22,0\n2,1,1,24,0\n");
    const Result fail = run_cli({"estimate", "-m", "restrict-pop-g", "--data", dir / "women.csv"});
    CHECK(fail.code == cli::kEstimationFailure);
    CHECK(!fail.err.empty());
}

TEST_CASE("simulate at smoke scale", "[cli]") {
    TempDir dir;
    const Result r = run_cli({"simulate", "--iterations", "4", "--reps", "100", "--truth", "0.216697", "--workers", "2",
                              "-o", dir / "report.csv", "--text", dir / "report.txt"});
    REQUIRE(r.code == 0);
    const std::string csv = slurp(dir / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 15);
    CHECK(slurp(dir / "report.txt").find("synth-ipw") != std::string::npos);

    const Result filtered = run_cli({"simulate", "--iterations", "2", "--reps", "50", "--truth", "0.216697",
                                     "--scenario", "accurate_with_covariance", "--text", dir / "t.txt"});
    REQUIRE(filtered.code == 0);
    CHECK(std::count(filtered.out.begin(), filtered.out.end(), '\n') == 3);
    CHECK(run_cli({"simulate", "--scenario", "bogus", "--iterations", "1"}).code == cli::kDataError);
}

TEST_CASE("truth command", "[cli]") {
    const Result small = run_cli({"truth", "--n", "100", "--seed", "1"});
    REQUIRE(small.code == 0);
    const double v = std::stod(small.out);
    CHECK((v >= -1.0 && v <= 1.0));
    CHECK(small.out.size() == std::string("0.000000\n").size());

    const Result big = run_cli({"truth", "--n", "1000000", "--seed", "1"});
    CHECK(std::abs(std::stod(big.out) - 0.216697) < 0.002);
}
