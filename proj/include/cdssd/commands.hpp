#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdssd/engine.hpp"
#include "cdssd/scenario.hpp"

namespace cdssd {

enum class Command { Calibrate, Evaluate, Monitor, Table1, Sweep, Simulate };

const char* command_name(Command c);

struct RunManifest {
    Command command = Command::Evaluate;
    std::filesystem::path scenario_path;
    std::filesystem::path output_dir;
    std::uint64_t seed = 1;
    int n_reps = 0;   ///< 0 selects the command default
    int workers = 1;
    std::string threshold;               ///< number, "inf", or a threshold.json path
    std::filesystem::path stream_path;   ///< monitor input; simulated from the scenario when empty
    bool force = false;
};

/// Provenance record embedded in every output. Leaves out the worker count,
/// which never changes results.
nlohmann::json manifest_json(const RunManifest& m);

/// Create the output directory and write manifest.json. Refuses to replace an
/// existing manifest unless m.force is set.
void prepare_output_dir(const RunManifest& m);

/// Resolve a --threshold argument.
double resolve_threshold(const std::string& arg);

/// Seeds for the phases of a run. Calibration and evaluation never share streams.
std::uint64_t calibration_seed(std::uint64_t seed, int m, SamplerKind kind);
std::uint64_t evaluation_seed(std::uint64_t seed, int m);

/// Default number of evaluation replications.
inline constexpr int kDefaultEvalReps = 1000;

/// "8.16(7.59)" style cell.
std::string format_cell(double mean, double sd);

struct GridCell {
    int m = 0;
    SamplerKind sampler = SamplerKind::TopM;
    double phi = 0.0;
    CalibrationResult calibration;
    RunLengthSummary summary;
};

/// Calibrate once per (m, sampler) and evaluate every phi in the scenario's table grid.
std::vector<GridCell> run_grid(const ScenarioFile& sf, const RunManifest& m, bool with_oracle);

nlohmann::json summary_json(const RunLengthSummary& s);

int cmd_calibrate(const RunManifest& m);
int cmd_evaluate(const RunManifest& m);
/// Returns 2 on alarm and 0 when the stream runs out.
int cmd_monitor(const RunManifest& m);
int cmd_table1(const RunManifest& m);
int cmd_sweep(const RunManifest& m);
int cmd_simulate(const RunManifest& m);

int run_command(const RunManifest& m);

}  // namespace cdssd
