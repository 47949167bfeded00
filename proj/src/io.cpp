#include "transport/io.hpp"

#include "transport/errors.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace transport {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    out.push_back(field);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t\"");
        const auto e = f.find_last_not_of(" \t\"");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

double parse_field(const std::string& text, const std::string& where) {
    if (text.empty() || text == "NA" || text == "nan" || text == "NaN") return kMissing;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw DataError(where + ": cannot parse '" + text + "' as a number");
    }
    return value;
}

}  // namespace

StudyDataset read_dataset_csv(std::istream& in, const std::string& source, std::optional<int> population) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) break;
    }
    if (line_no == 0 || line.find_first_not_of(" \t\r") == std::string::npos) {
        throw DataError(source + ": empty file, expected a header line");
    }
    const std::vector<std::string> header = split_fields(line);
    std::map<Variable, std::size_t> pos;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (auto v = parse_variable(header[j])) {
            if (pos.count(*v)) throw DataError(source + " line " + std::to_string(line_no) + ": duplicate column " + header[j]);
            pos[*v] = j;
        }
    }
    for (Variable v : {Variable::V, Variable::W}) {
        if (!pos.count(v)) {
            throw DataError(source + " line " + std::to_string(line_no) + ": header lacks column " +
                            std::string(variable_name(v)));
        }
    }
    if (!pos.count(Variable::R) && !population) {
        throw DataError(source + " line " + std::to_string(line_no) +
                        ": header lacks column R (or pass the file as --trial / --target)");
    }

    std::vector<Observation> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = source + " line " + std::to_string(line_no);
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        }
        Observation o;
        if (pos.count(Variable::A)) o.a = parse_field(fields[pos[Variable::A]], where);
        if (pos.count(Variable::Y)) o.y = parse_field(fields[pos[Variable::Y]], where);
        o.v = parse_field(fields[pos[Variable::V]], where);
        o.w = parse_field(fields[pos[Variable::W]], where);
        if (pos.count(Variable::R)) {
            const double r = parse_field(fields[pos[Variable::R]], where);
            if (!(r == kTarget || r == kTrial)) throw DataError(where + ": R must be 1 or 2");
            if (population && r != *population) {
                throw DataError(where + ": R=" + fields[pos[Variable::R]] + " conflicts with the file's population (R=" +
                                std::to_string(*population) + ")");
            }
            o.r = int(r);
        } else {
            o.r = *population;
        }
        if (const std::string problem = row_violation(o); !problem.empty()) throw DataError(where + ": " + problem);
        rows.push_back(o);
    }
    return StudyDataset::from_rows(rows);
}

StudyDataset read_dataset_csv(const std::filesystem::path& path, std::optional<int> population) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return read_dataset_csv(in, path.string(), population);
}

std::string format_number(double x) {
    if (is_missing(x)) return "";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc()) throw std::runtime_error("format_number failed");
    return std::string(buf, ptr);
}

void write_dataset_csv(std::ostream& out, const StudyDataset& data) {
    out << "R,A,Y,V,W\n";
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        out << format_number(data.R(i)) << ',' << format_number(data.A(i)) << ',' << format_number(data.Y(i)) << ','
            << format_number(data.V(i)) << ',' << format_number(data.W(i)) << '\n';
    }
}

nlohmann::ordered_json to_json(const EffectEstimate& e) {
    nlohmann::ordered_json j;
    j["method"] = e.method;
    j["rd"] = e.rd;
    j["ci_lower"] = e.ci_lower;
    j["ci_upper"] = e.ci_upper;
    j["risk1"] = e.risk1;
    j["risk0"] = e.risk0;
    if (e.se) j["se"] = *e.se;
    if (!e.draws.empty()) j["n_draws"] = e.draws.size();
    return j;
}

nlohmann::ordered_json to_json(const Bounds& b) {
    nlohmann::ordered_json j;
    j["method"] = "bounds";
    j["lower"] = b.lower;
    j["upper"] = b.upper;
    return j;
}

nlohmann::ordered_json to_json(const std::vector<StratumCount>& flagged, const std::vector<Variable>& strata) {
    nlohmann::ordered_json j;
    j["method"] = "diagnose";
    auto names = nlohmann::ordered_json::array();
    for (Variable v : strata) names.push_back(std::string(variable_name(v)));
    j["strata"] = names;
    j["positivity_holds"] = flagged.empty();
    auto list = nlohmann::ordered_json::array();
    for (const auto& s : flagged) {
        nlohmann::ordered_json rec;
        nlohmann::ordered_json key;
        for (const auto& [v, value] : s.stratum) key[std::string(variable_name(v))] = value;
        rec["stratum"] = key;
        rec["target_count"] = s.target_count;
        rec["trial_count"] = s.trial_count;
        list.push_back(rec);
    }
    j["flagged"] = list;
    return j;
}

void write_draws_csv(std::ostream& out, std::span<const double> draws) {
    out << "rd\n";
    for (double d : draws) out << format_number(d) << '\n';
}

namespace {

double number(const nlohmann::json& j, const char* key, const std::string& kind) {
    if (!j.contains(key) || !j.at(key).is_number()) {
        throw DataError(kind + " distribution: missing numeric field '" + key + "'");
    }
    return j.at(key).get<double>();
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array()) throw DataError(what + " must be an array");
    Eigen::VectorXd v(Eigen::Index(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw DataError(what + " must contain numbers");
        v(Eigen::Index(i)) = j[i].get<double>();
    }
    return v;
}

MultivariateNormal mvn_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("mu") || !j.contains("cov")) {
        throw DataError("multivariate normal: need 'mu' and 'cov'");
    }
    const Eigen::VectorXd mu = vector_from_json(j.at("mu"), "mu");
    const auto& rows = j.at("cov");
    if (!rows.is_array() || Eigen::Index(rows.size()) != mu.size()) {
        throw DataError("multivariate normal: cov must be a square array matching mu");
    }
    Eigen::MatrixXd cov(mu.size(), mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        const Eigen::VectorXd r = vector_from_json(rows[std::size_t(i)], "cov row");
        if (r.size() != mu.size()) throw DataError("multivariate normal: cov must be square");
        cov.row(i) = r.transpose();
    }
    return MultivariateNormal(mu, cov);
}

DesignSpec design_from_json(const nlohmann::json& j, const std::string& key) {
    if (!j.is_array()) throw DataError(key + " must be a list of formula strings");
    std::vector<std::string> terms;
    for (const auto& t : j) {
        if (!t.is_string()) throw DataError(key + " must be a list of formula strings");
        terms.push_back(t.get<std::string>());
    }
    return DesignSpec::parse(terms);
}

}  // namespace

ParameterDistribution distribution_from_json(const nlohmann::json& j) {
    if (j.is_number()) return PointMass{j.get<double>()};
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
        throw DataError("distribution record needs a string 'kind'");
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "point_mass" || kind == "point") return PointMass{number(j, "value", kind)};
    if (kind == "trapezoid") {
        return Trapezoid(number(j, "min", kind), number(j, "mode1", kind), number(j, "mode2", kind),
                         number(j, "max", kind));
    }
    if (kind == "normal") return Normal(number(j, "mu", kind), number(j, "sigma", kind));
    if (kind == "multivariate_normal" || kind == "mvn") return mvn_from_json(j);
    throw DataError("unknown distribution kind '" + kind + "'");
}

SynthesisConfig synthesis_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("synthesis config must be a JSON object");
    SynthesisConfig c;
    const bool pair = j.contains("b0") || j.contains("b1");
    if (pair && j.contains("joint")) throw DataError("synthesis config: give b0/b1 or joint, not both");
    if (j.contains("joint")) {
        c.shift = ShiftModel::bivariate(mvn_from_json(j.at("joint")));
    } else if (pair) {
        if (!j.contains("b0") || !j.contains("b1")) throw DataError("synthesis config: both b0 and b1 are required");
        c.shift = ShiftModel::independent(distribution_from_json(j.at("b0")), distribution_from_json(j.at("b1")));
    } else {
        throw DataError("synthesis config: needs b0 and b1, or joint");
    }
    if (j.contains("outcome_design")) c.outcome_design = design_from_json(j.at("outcome_design"), "outcome_design");
    if (j.contains("selection_design")) {
        c.selection_design = design_from_json(j.at("selection_design"), "selection_design");
    }
    if (j.contains("reps")) {
        if (!j.at("reps").is_number_integer() || j.at("reps").get<std::int64_t>() < 1) {
            throw DataError("synthesis config: reps must be a positive integer");
        }
        c.reps = j.at("reps").get<std::int64_t>();
    }
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw DataError("synthesis config: seed must be a non-negative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    return c;
}

SynthesisConfig read_synthesis_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": invalid JSON: " + e.what());
    }
    return synthesis_config_from_json(j);
}

}  // namespace transport
