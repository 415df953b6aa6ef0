#include "cdssd/scenario.hpp"

#include <fstream>
#include <set>
#include <string>

#include "cdssd/errors.hpp"

namespace cdssd {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, const char* where) {
    if (!obj.is_object() || !obj.contains(key))
        throw ConfigError(std::string(where) + ": missing required field '" + key + "'");
    return obj.at(key);
}

double number(const json& v, const std::string& what) {
    if (!v.is_number()) throw ConfigError(what + " must be a number");
    return v.get<double>();
}

int integer(const json& v, const std::string& what) {
    if (!v.is_number_integer()) throw ConfigError(what + " must be an integer");
    return v.get<int>();
}

// Scalar broadcast to k entries, or an explicit array of length k.
Vector per_basis(const json& v, int k, const std::string& what) {
    if (v.is_number()) return Vector::Constant(k, v.get<double>());
    if (!v.is_array() || static_cast<int>(v.size()) != k)
        throw ConfigError(what + " must be a number or an array of k_a = " + std::to_string(k) + " numbers");
    Vector out(k);
    for (int j = 0; j < k; ++j) out(j) = number(v[static_cast<std::size_t>(j)], what);
    return out;
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, _] : obj.items())
        if (!known.count(key)) throw ConfigError(where + ": unknown field '" + key + "'");
}

Matrix read_matrix_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open basis file " + path.string());
    return read_basis_csv(in);
}

}  // namespace

Matrix build_basis(const json& spec, int p, const std::filesystem::path& base_dir) {
    const std::string type = require(spec, "type", "basis").get<std::string>();
    if (type == "none") return Matrix(p, 0);
    if (type == "fourier") {
        reject_unknown(spec, {"type", "k"}, "fourier basis");
        return fourier_basis(p, integer(require(spec, "k", "fourier basis"), "fourier k"));
    }
    if (type == "bspline") {
        reject_unknown(spec, {"type", "order", "n_knots", "normalize_columns", "knot_span"}, "bspline basis");
        const int order = integer(require(spec, "order", "bspline basis"), "bspline order");
        const int knots = integer(require(spec, "n_knots", "bspline basis"), "bspline n_knots");
        const bool norm = spec.value("normalize_columns", false);
        const std::string span = spec.value("knot_span", std::string("interior"));
        if (span != "interior" && span != "full") throw ConfigError("knot_span must be 'interior' or 'full'");
        return bspline_basis(p, order, knots, norm, span == "full" ? KnotSpan::Full : KnotSpan::Interior);
    }
    if (type == "identity") {
        reject_unknown(spec, {"type"}, "identity basis");
        return identity_anomaly_basis(p);
    }
    if (type == "kron") {
        reject_unknown(spec, {"type", "factors"}, "kron basis");
        const json& f = require(spec, "factors", "kron basis");
        if (!f.is_array() || f.size() != 2) throw ConfigError("kron basis needs exactly two factors");
        const int p1 = integer(require(f[0], "p", "kron factor"), "kron factor p");
        const int p2 = integer(require(f[1], "p", "kron factor"), "kron factor p");
        if (p1 * p2 != p) throw ConfigError("kron factor sizes " + std::to_string(p1) + " x " + std::to_string(p2) + " do not give p = " + std::to_string(p));
        json s1 = f[0], s2 = f[1];
        s1.erase("p");
        s2.erase("p");
        return kron_basis(build_basis(s1, p1, base_dir), build_basis(s2, p2, base_dir));
    }
    if (type == "csv") {
        reject_unknown(spec, {"type", "path"}, "csv basis");
        const Matrix b = read_matrix_file(base_dir / require(spec, "path", "csv basis").get<std::string>());
        if (b.rows() != p) throw ConfigError("basis file has " + std::to_string(b.rows()) + " rows, p is " + std::to_string(p));
        return b;
    }
    if (type == "pca") {
        reject_unknown(spec, {"type", "training", "k"}, "pca basis");
        std::ifstream in(base_dir / require(spec, "training", "pca basis").get<std::string>());
        if (!in) throw ConfigError("cannot open PCA training stream");
        const Matrix rows = read_stream_csv(in);
        if (rows.cols() != p) throw ConfigError("PCA training stream width differs from p");
        if (!rows.allFinite()) throw ConfigError("PCA training stream has missing values");
        return pca_basis(rows.transpose(), integer(require(spec, "k", "pca basis"), "pca k")).basis;
    }
    throw ConfigError("unknown basis type '" + type + "'");
}

ScenarioFile parse_scenario(const json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
    reject_unknown(doc,
                   {"name", "p", "m", "background_basis", "anomaly_basis", "sigma_e", "sigma_b", "lambda", "w",
                    "sigma_j", "v", "tau", "horizon", "change", "arl0_target", "sampler", "fit", "calibration", "table",
                    "comment"},
                   "scenario");
    const int p = integer(require(doc, "p", "scenario"), "p");
    if (p < 1) throw ConfigError("p must be positive");
    Matrix bb = build_basis(require(doc, "background_basis", "scenario"), p, base_dir);
    Matrix ba = build_basis(require(doc, "anomaly_basis", "scenario"), p, base_dir);
    BasisDictionary dict(std::move(bb), std::move(ba));
    const int ka = dict.k_a();

    ModelConfig cfg;
    cfg.m = integer(require(doc, "m", "scenario"), "m");
    cfg.sigma_e = number(require(doc, "sigma_e", "scenario"), "sigma_e");
    cfg.sigma_b = number(require(doc, "sigma_b", "scenario"), "sigma_b");
    cfg.lambda = number(require(doc, "lambda", "scenario"), "lambda");
    cfg.v = number(require(doc, "v", "scenario"), "v");
    cfg.w = per_basis(require(doc, "w", "scenario"), ka, "w");
    cfg.sigma_j = per_basis(require(doc, "sigma_j", "scenario"), ka, "sigma_j");

    long tau = kNoChange;
    if (doc.contains("tau") && !doc.at("tau").is_null()) tau = integer(doc.at("tau"), "tau");
    const int horizon = doc.contains("horizon") ? integer(doc.at("horizon"), "horizon") : 2000;

    std::vector<ChangeComponent> change;
    bool random_basis = false;
    if (doc.contains("change")) {
        const json& ch = doc.at("change");
        if (!ch.is_array()) throw ConfigError("change must be an array");
        for (const json& c : ch) {
            reject_unknown(c, {"basis", "phi"}, "change component");
            ChangeComponent cc;
            cc.phi = number(require(c, "phi", "change component"), "phi");
            const json& b = require(c, "basis", "change component");
            if (b.is_string()) {
                if (b.get<std::string>() != "random") throw ConfigError("change basis must be an index or \"random\"");
                random_basis = true;
            } else {
                cc.basis_index = integer(b, "change basis");
            }
            change.push_back(cc);
        }
    }
    const double target = doc.contains("arl0_target") ? number(doc.at("arl0_target"), "arl0_target") : 0.0;
    const std::string name = doc.value("name", std::string("scenario"));

    ScenarioFile out{Scenario{name, dict, cfg, tau, change, horizon, random_basis, target}, {}, 1000, 0.01, {}, {}, false, doc};
    out.scenario.validate();

    const std::string sampler = doc.value("sampler", std::string("top_m"));
    if (sampler == "top_m") out.engine.sampler = SamplerKind::TopM;
    else if (sampler == "oracle") out.engine.sampler = SamplerKind::Oracle;
    else throw ConfigError("sampler must be 'top_m' or 'oracle'");
    if (doc.contains("fit")) {
        const json& f = doc.at("fit");
        reject_unknown(f, {"tol", "max_iters"}, "fit");
        if (f.contains("tol")) out.engine.fit.tol = number(f.at("tol"), "fit.tol");
        if (f.contains("max_iters")) out.engine.fit.max_iters = integer(f.at("max_iters"), "fit.max_iters");
    }
    if (doc.contains("calibration")) {
        const json& c = doc.at("calibration");
        reject_unknown(c, {"reps", "tol_rel"}, "calibration");
        if (c.contains("reps")) out.calibration_reps = integer(c.at("reps"), "calibration.reps");
        if (c.contains("tol_rel")) out.calibration_tol_rel = number(c.at("tol_rel"), "calibration.tol_rel");
    }
    out.table_m = {cfg.m};
    for (int i = 0; i <= 10; ++i) out.table_phi.push_back(i / 10.0);
    if (doc.contains("table")) {
        const json& t = doc.at("table");
        reject_unknown(t, {"m", "phi", "oracle"}, "table");
        if (t.contains("m")) out.table_m = t.at("m").get<std::vector<int>>();
        if (t.contains("phi")) out.table_phi = t.at("phi").get<std::vector<double>>();
        if (t.contains("oracle")) out.table_oracle = t.at("oracle").get<bool>();
        for (int m : out.table_m)
            if (m < 1 || m > p) throw ConfigError("table budget " + std::to_string(m) + " outside [1, p]");
    }
    return out;
}

ScenarioFile load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path.string());
    json doc;
    try {
        doc = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("scenario file " + path.string() + ": " + e.what());
    }
    return parse_scenario(doc, path.parent_path());
}

Scenario with_budget_and_magnitude(const Scenario& sc, int m, double phi) {
    Scenario out = sc;
    out.cfg.m = m;
    for (auto& c : out.change) c.phi = phi;
    return out;
}

}  // namespace cdssd
