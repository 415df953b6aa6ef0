#include "cdssd/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cdssd/detection.hpp"
#include "cdssd/errors.hpp"

namespace cdssd {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
    if (!out) throw ConfigError("write failed for " + path.string());
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

const char* sampler_name(SamplerKind k) { return k == SamplerKind::Oracle ? "oracle" : "top_m"; }

const char* method_name(SamplerKind k) { return k == SamplerKind::Oracle ? "CDSSD(O)" : "CDSSD"; }

int eval_reps(const RunManifest& m) { return m.n_reps > 0 ? m.n_reps : kDefaultEvalReps; }

void check_workers(const RunManifest& m) {
    if (m.workers < 1) throw ConfigError("workers must be at least 1");
    if (m.n_reps < 0) throw ConfigError("reps must be positive");
}

double require_target(const Scenario& sc) {
    if (!(sc.arl0_target > 0.0)) throw ConfigError("scenario has no arl0_target; calibration needs one");
    return sc.arl0_target;
}

json calibration_json(const CalibrationResult& c) {
    return json{{"h", c.h},
                {"target_arl0", c.target},
                {"tol_rel", c.tol_rel},
                {"achieved_arl", c.achieved_arl},
                {"arl_stderr", c.arl_stderr},
                {"n_reps", c.n_reps},
                {"horizon", c.horizon},
                {"n_censored", c.n_censored},
                {"iterations", c.iterations}};
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

const char* command_name(Command c) {
    switch (c) {
        case Command::Calibrate: return "calibrate";
        case Command::Evaluate: return "evaluate";
        case Command::Monitor: return "monitor";
        case Command::Table1: return "table1";
        case Command::Sweep: return "sweep";
        case Command::Simulate: return "simulate";
    }
    return "?";
}

json manifest_json(const RunManifest& m) {
    json j{{"command", command_name(m.command)},
           {"scenario", m.scenario_path.generic_string()},
           {"seed", m.seed},
           {"reps", m.n_reps}};
    if (!m.threshold.empty()) j["threshold"] = m.threshold;
    if (!m.stream_path.empty()) j["stream"] = m.stream_path.generic_string();
    return j;
}

void prepare_output_dir(const RunManifest& m) {
    if (m.output_dir.empty()) throw ConfigError("an output directory is required (--out)");
    std::error_code ec;
    fs::create_directories(m.output_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + m.output_dir.string() + ": " + ec.message());
    const fs::path manifest = m.output_dir / "manifest.json";
    if (fs::exists(manifest) && !m.force)
        throw ConfigError(manifest.string() + " already exists; pass --force to overwrite");
    json j = manifest_json(m);
    j["output_dir"] = m.output_dir.generic_string();
    j["workers"] = m.workers;
    write_text(manifest, j.dump(2) + "\n");
}

double resolve_threshold(const std::string& arg) {
    if (arg.empty()) throw ConfigError("a threshold is required (--threshold VALUE or --threshold threshold.json)");
    try {
        std::size_t used = 0;
        const double h = std::stod(arg, &used);
        if (used == arg.size()) {
            if (std::isnan(h)) throw ConfigError("threshold must not be NaN");
            return h;
        }
    } catch (const std::invalid_argument&) {
    } catch (const std::out_of_range&) {
        throw ConfigError("threshold " + arg + " is out of range");
    }
    std::ifstream in(arg);
    if (!in) throw ConfigError("threshold '" + arg + "' is neither a number nor a readable file");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("threshold file " + arg + ": " + e.what());
    }
    if (!doc.contains("h") || !doc.at("h").is_number()) throw ConfigError("threshold file " + arg + " has no numeric 'h'");
    return doc.at("h").get<double>();
}

std::uint64_t calibration_seed(std::uint64_t seed, int m, SamplerKind kind) {
    return derive_seed(seed, 1000 + static_cast<std::uint64_t>(m), kind == SamplerKind::Oracle ? 12 : 11);
}

std::uint64_t evaluation_seed(std::uint64_t seed, int m) {
    return derive_seed(seed, 1000 + static_cast<std::uint64_t>(m), 21);
}

std::string format_cell(double mean, double sd) {
    auto f = [](double v) {
        char buf[64];
        if (!std::isfinite(v)) return std::string("NA");
        const double a = std::abs(v);
        if (a >= 99.95) std::snprintf(buf, sizeof buf, "%.0f", v);
        else if (a >= 9.995) std::snprintf(buf, sizeof buf, "%.1f", v);
        else std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    return f(mean) + "(" + f(sd) + ")";
}

json summary_json(const RunLengthSummary& s) {
    json j{{"h", finite_or_null(s.h)},
           {"n_reps", s.n_reps},
           {"n_false_alarm", s.n_false_alarm},
           {"n_never_alarmed", s.n_never_alarmed},
           {"n_censored", s.n_censored},
           {"n_detected", s.n_detected},
           {"null_scenario", s.null_scenario}};
    if (s.null_scenario) {
        j["arl0"] = s.arl0;
        j["arl0_stderr"] = s.arl0_stderr;
        j["run_length_sd"] = s.std_dd;
    } else {
        j["add_defined"] = s.add_defined;
        j["add"] = s.add_defined ? json(s.add) : json(nullptr);
        j["add_stderr"] = s.add_defined ? json(s.add_stderr) : json(nullptr);
        j["std_dd"] = s.add_defined ? json(s.std_dd) : json(nullptr);
    }
    return j;
}

std::vector<GridCell> run_grid(const ScenarioFile& sf, const RunManifest& m, bool with_oracle) {
    const Scenario& base = sf.scenario;
    const double target = require_target(base);
    std::vector<SamplerKind> kinds;
    if (with_oracle) kinds.push_back(SamplerKind::Oracle);
    kinds.push_back(SamplerKind::TopM);
    std::vector<GridCell> cells;
    for (int budget : sf.table_m) {
        for (SamplerKind kind : kinds) {
            EngineOptions opts = sf.engine;
            opts.sampler = kind;
            const Scenario sc_m = with_budget_and_magnitude(base, budget, 0.0);
            const CalibrationResult cal =
                calibrate_threshold(sc_m.cfg, sc_m.dict, target, sf.calibration_reps, sc_m.horizon,
                                    sf.calibration_tol_rel, calibration_seed(m.seed, budget, kind), m.workers, opts);
            for (double phi : sf.table_phi) {
                const Scenario sc = with_budget_and_magnitude(base, budget, phi);
                GridCell c;
                c.m = budget;
                c.sampler = kind;
                c.phi = phi;
                c.calibration = cal;
                c.summary = evaluate(sc, cal.h, eval_reps(m), evaluation_seed(m.seed, budget), m.workers, opts);
                cells.push_back(std::move(c));
            }
        }
    }
    return cells;
}

int cmd_calibrate(const RunManifest& m) {
    check_workers(m);
    const ScenarioFile sf = load_scenario(m.scenario_path);
    const Scenario& sc = sf.scenario;
    const double target = require_target(sc);
    prepare_output_dir(m);
    const int reps = m.n_reps > 0 ? m.n_reps : sf.calibration_reps;
    const CalibrationResult cal =
        calibrate_threshold(sc.cfg, sc.dict, target, reps, sc.horizon, sf.calibration_tol_rel,
                            calibration_seed(m.seed, sc.cfg.m, sf.engine.sampler), m.workers, sf.engine);
    json out = calibration_json(cal);
    out["seed"] = m.seed;
    out["m"] = sc.cfg.m;
    out["sampler"] = sampler_name(sf.engine.sampler);
    out["manifest"] = manifest_json(m);
    write_text(m.output_dir / "threshold.json", out.dump(2) + "\n");
    std::cout << "h = " << num(cal.h) << "  ARL = " << cal.achieved_arl << " +/- " << cal.arl_stderr << "\n";
    return 0;
}

int cmd_evaluate(const RunManifest& m) {
    check_workers(m);
    const ScenarioFile sf = load_scenario(m.scenario_path);
    const double h = resolve_threshold(m.threshold);
    if (m.n_reps < 0) throw ConfigError("reps must be positive");
    prepare_output_dir(m);
    const Scenario& sc = sf.scenario;
    const RunLengthSummary s = evaluate(sc, h, eval_reps(m), evaluation_seed(m.seed, sc.cfg.m), m.workers, sf.engine);

    std::ostringstream csv;
    csv << "# " << manifest_json(m).dump() << "\n";
    csv << "rep,T,false_alarm,delay\n";
    for (std::size_t r = 0; r < s.reps.size(); ++r) {
        const RepOutcome& o = s.reps[r];
        csv << r << ',';
        if (o.T > 0) csv << o.T;
        csv << ',' << (o.false_alarm ? 1 : 0) << ',';
        if (o.delay > 0) csv << o.delay;
        csv << '\n';
    }
    write_text(m.output_dir / "delays.csv", csv.str());

    json out = summary_json(s);
    out["scenario"] = sc.name;
    out["m"] = sc.cfg.m;
    out["sampler"] = sampler_name(sf.engine.sampler);
    out["manifest"] = manifest_json(m);
    write_text(m.output_dir / "summary.json", out.dump(2) + "\n");
    if (s.null_scenario)
        std::cout << "ARL0 = " << s.arl0 << " +/- " << s.arl0_stderr << "\n";
    else if (s.add_defined)
        std::cout << "ADD = " << s.add << " +/- " << s.add_stderr << "  (" << s.n_detected << " detected, "
                  << s.n_false_alarm << " false alarms, " << s.n_never_alarmed << " never alarmed)\n";
    else
        std::cout << "ADD undefined: no replication alarmed after the change\n";
    return 0;
}

int cmd_monitor(const RunManifest& m) {
    const ScenarioFile sf = load_scenario(m.scenario_path);
    const double h = resolve_threshold(m.threshold);
    const Scenario& sc = sf.scenario;
    Matrix rows;
    if (m.stream_path.empty()) {
        rows = gen_stream(sc, stream_seed(m.seed, 0));
    } else {
        std::ifstream in(m.stream_path);
        if (!in) throw DataError("cannot open stream " + m.stream_path.string());
        rows = read_stream_csv(in);
        if (rows.cols() != sc.dict.p())
            throw DataError("stream has " + std::to_string(rows.cols()) + " variables, scenario p = " +
                            std::to_string(sc.dict.p()));
    }
    prepare_output_dir(m);

    std::ofstream log(m.output_dir / "detection_log.jsonl", std::ios::binary | std::ios::trunc);
    std::ofstream post(m.output_dir / "posterior.jsonl", std::ios::binary | std::ios::trunc);
    std::ofstream sensing(m.output_dir / "sensing.csv", std::ios::binary | std::ios::trunc);
    if (!log || !post || !sensing) throw ConfigError("cannot write monitor outputs in " + m.output_dir.string());
    const std::string header = json{{"manifest", manifest_json(m)}}.dump();
    log << header << '\n';
    post << header << '\n';
    sensing << "# " << manifest_json(m).dump() << "\nstep,z,max_score,min_selected_score\n";
    sensing.precision(17);

    auto write_plan = [&](long for_step, const SensingPlan& plan) {
        sensing << for_step << ',';
        for (std::size_t i = 0; i < plan.z.size(); ++i) sensing << (i ? ";" : "") << plan.z[i];
        sensing << ',';
        if (plan.scores) {
            double lo = kInf;
            for (int i : plan.z) lo = std::min(lo, (*plan.scores)(i));
            sensing << plan.scores->maxCoeff() << ',' << lo;
        } else {
            sensing << ',';
        }
        sensing << '\n';
    };

    EngineState st = init(sc.cfg, sc.dict, h, engine_seed(m.seed, 0), sf.engine);
    write_plan(1, st.plan);
    for (Eigen::Index t = 0; t < rows.rows(); ++t) {
        const StepOutcome o = step(st, rows.row(t).transpose());
        log << json{{"step", o.step}, {"lambda", o.lambda}, {"alarmed", o.alarmed}, {"z_indices", o.observed}}.dump()
            << '\n';
        post << posterior_record(o.step, st.post, st.bg, o.converged).dump() << '\n';
        if (o.alarmed) {
            std::cout << "alarm at step " << o.step << " (lambda = " << num(o.lambda) << ")\n";
            return 2;
        }
        write_plan(o.step + 1, st.plan);
    }
    std::cout << "stream exhausted after " << rows.rows() << " steps without an alarm\n";
    return 0;
}

int cmd_table1(const RunManifest& m) {
    check_workers(m);
    const ScenarioFile sf = load_scenario(m.scenario_path);
    prepare_output_dir(m);
    const std::vector<GridCell> cells = run_grid(sf, m, sf.table_oracle);

    std::vector<std::pair<int, SamplerKind>> cols;
    for (const auto& c : cells)
        if (std::find(cols.begin(), cols.end(), std::make_pair(c.m, c.sampler)) == cols.end())
            cols.emplace_back(c.m, c.sampler);

    std::ostringstream csv;
    csv << "# " << manifest_json(m).dump() << "\n";
    csv << "phi";
    for (const auto& [budget, kind] : cols) csv << ",m=" << budget << " " << method_name(kind);
    csv << '\n';
    json rows = json::array();
    for (double phi : sf.table_phi) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", phi);
        csv << buf;
        for (const auto& [budget, kind] : cols) {
            for (const auto& c : cells) {
                if (c.m != budget || c.sampler != kind || c.phi != phi) continue;
                const RunLengthSummary& s = c.summary;
                if (s.null_scenario) csv << ',' << format_cell(s.arl0, s.std_dd);
                else if (s.add_defined) csv << ',' << format_cell(s.add, s.std_dd);
                else csv << ",NA";
                json cell = summary_json(s);
                cell["m"] = c.m;
                cell["method"] = method_name(c.sampler);
                cell["phi"] = c.phi;
                rows.push_back(std::move(cell));
            }
        }
        csv << '\n';
    }
    write_text(m.output_dir / "table1.csv", csv.str());

    json cal = json::array();
    for (const auto& [budget, kind] : cols)
        for (const auto& c : cells)
            if (c.m == budget && c.sampler == kind) {
                json j = calibration_json(c.calibration);
                j["m"] = budget;
                j["method"] = method_name(kind);
                cal.push_back(std::move(j));
                break;
            }
    json out{{"scenario", sf.scenario.name}, {"calibration", cal}, {"cells", rows}, {"manifest", manifest_json(m)}};
    write_text(m.output_dir / "table1.json", out.dump(2) + "\n");
    std::cout << csv.str().substr(csv.str().find('\n') + 1);
    return 0;
}

int cmd_sweep(const RunManifest& m) {
    check_workers(m);
    const ScenarioFile sf = load_scenario(m.scenario_path);
    prepare_output_dir(m);
    const std::vector<GridCell> cells = run_grid(sf, m, sf.table_oracle);
    std::ostringstream csv;
    csv.precision(17);
    csv << "# " << manifest_json(m).dump() << "\n";
    csv << "m,method,phi,h,n_reps,n_detected,n_false_alarm,n_never_alarmed,mean,stderr,sd\n";
    for (const auto& c : cells) {
        const RunLengthSummary& s = c.summary;
        csv << c.m << ',' << method_name(c.sampler) << ',' << c.phi << ',' << c.calibration.h << ',' << s.n_reps << ','
            << s.n_detected << ',' << s.n_false_alarm << ',' << s.n_never_alarmed << ',';
        if (s.null_scenario) csv << s.arl0 << ',' << s.arl0_stderr << ',' << s.std_dd;
        else if (s.add_defined) csv << s.add << ',' << s.add_stderr << ',' << s.std_dd;
        else csv << ",,";
        csv << '\n';
    }
    write_text(m.output_dir / "sweep.csv", csv.str());
    std::cout << "wrote " << cells.size() << " cells to " << (m.output_dir / "sweep.csv").string() << "\n";
    return 0;
}

int cmd_simulate(const RunManifest& m) {
    const ScenarioFile sf = load_scenario(m.scenario_path);
    prepare_output_dir(m);
    std::ostringstream csv;
    csv << "# " << manifest_json(m).dump() << "\n";
    write_stream_csv(csv, gen_stream(sf.scenario, stream_seed(m.seed, 0)));
    write_text(m.output_dir / "stream.csv", csv.str());
    return 0;
}

int run_command(const RunManifest& m) {
    switch (m.command) {
        case Command::Calibrate: return cmd_calibrate(m);
        case Command::Evaluate: return cmd_evaluate(m);
        case Command::Monitor: return cmd_monitor(m);
        case Command::Table1: return cmd_table1(m);
        case Command::Sweep: return cmd_sweep(m);
        case Command::Simulate: return cmd_simulate(m);
    }
    throw ConfigError("unknown command");
}

}  // namespace cdssd
