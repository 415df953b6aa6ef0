// Command-line front end: calibrate, evaluate, monitor, table1, sweep, simulate.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cdssd/commands.hpp"
#include "cdssd/errors.hpp"

using cdssd::Command;
using cdssd::RunManifest;

namespace {

CLI::App* add_command(CLI::App& app, const char* name, const char* help, RunManifest& m, bool reps, bool threshold,
                      bool workers) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--scenario", m.scenario_path, "scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", m.output_dir, "output directory")->required();
    sub->add_option("--seed", m.seed, "base random seed");
    sub->add_flag("--force", m.force, "overwrite an existing manifest in --out");
    if (reps) sub->add_option("--reps", m.n_reps, "number of replications")->check(CLI::PositiveNumber);
    if (workers) sub->add_option("--workers", m.workers, "worker threads")->check(CLI::PositiveNumber);
    if (threshold) sub->add_option("--threshold", m.threshold, "alarm threshold: a number, inf, or a threshold.json path");
    return sub;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive sensing change detection for partially observed streams"};
    app.require_subcommand(1);
    RunManifest m;

    auto* cal = add_command(app, "calibrate", "find h giving the scenario's ARL0 target", m, true, false, true);
    auto* ev = add_command(app, "evaluate", "ADD / ARL over replications at a fixed threshold", m, true, true, true);
    auto* mon = add_command(app, "monitor", "run the detector over one stream", m, false, true, false);
    mon->add_option("--stream", m.stream_path, "stream CSV (t,x1..xp); simulated from the scenario when absent")
        ->check(CLI::ExistingFile);
    auto* tab = add_command(app, "table1", "ADD(STD) table over the scenario's m and phi grid", m, true, false, true);
    auto* sw = add_command(app, "sweep", "long-format ADD over the scenario's m and phi grid", m, true, false, true);
    auto* sim = add_command(app, "simulate", "write one synthetic stream as CSV", m, false, false, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (cal->parsed()) m.command = Command::Calibrate;
    else if (ev->parsed()) m.command = Command::Evaluate;
    else if (mon->parsed()) m.command = Command::Monitor;
    else if (tab->parsed()) m.command = Command::Table1;
    else if (sw->parsed()) m.command = Command::Sweep;
    else if (sim->parsed()) m.command = Command::Simulate;

    try {
        return cdssd::run_command(m);
    } catch (const cdssd::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
    }
    return 1;
}
