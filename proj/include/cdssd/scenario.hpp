#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "cdssd/engine.hpp"
#include "cdssd/simgen.hpp"

namespace cdssd {

/// A scenario file plus the run settings it carries.
struct ScenarioFile {
    Scenario scenario;
    EngineOptions engine;
    int calibration_reps = 1000;
    double calibration_tol_rel = 0.01;
    std::vector<int> table_m;       ///< budgets for table1 / sweep
    std::vector<double> table_phi;  ///< magnitudes for table1 / sweep
    bool table_oracle = false;      ///< include the enumerating sampler in table1
    nlohmann::json source;          ///< the parsed file, for provenance
};

/// Basis matrix from a spec object such as {"type": "fourier", "k": 3}.
/// Relative file paths resolve against base_dir.
Matrix build_basis(const nlohmann::json& spec, int p, const std::filesystem::path& base_dir);

ScenarioFile parse_scenario(const nlohmann::json& doc, const std::filesystem::path& base_dir);

ScenarioFile load_scenario(const std::filesystem::path& path);

/// Copy of `sc` with budget m and every change magnitude set to phi.
Scenario with_budget_and_magnitude(const Scenario& sc, int m, double phi);

}  // namespace cdssd
