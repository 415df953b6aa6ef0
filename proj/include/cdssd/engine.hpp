#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cdssd/bases.hpp"
#include "cdssd/common.hpp"
#include "cdssd/inference.hpp"
#include "cdssd/sampling.hpp"
#include "cdssd/simgen.hpp"

namespace cdssd {

enum class SamplerKind {
    TopM,    ///< per-variable ranking
    Oracle,  ///< exhaustive subset enumeration
};

struct EngineOptions {
    FitOptions fit;
    SamplerKind sampler = SamplerKind::TopM;
};

/// Everything one monitored stream carries between steps.
struct EngineState {
    ModelConfig cfg;
    BasisDictionary dict;
    EngineOptions opts;
    SpikeSlabPosterior post;
    BackgroundPosterior bg;
    DecayedStats stats;
    SensingPlan plan;  ///< Z(n) for the upcoming observation
    long step = 0;
    bool alarmed = false;
    double h = kInf;
    bool last_converged = true;
    Rng rng;
};

struct StepOutcome {
    bool alarmed = false;
    long step = 0;       ///< 1-based index of the step just processed
    double lambda = 0.0;
    IndexSet observed;   ///< Z used at this step
    bool converged = true;
};

/// Prior-centered state with a uniformly random first plan.
EngineState init(const ModelConfig& cfg, const BasisDictionary& dict, double h, std::uint64_t seed,
                 const EngineOptions& opts = {});

/// Process one observation.
///
/// `x` is either a full length-p row, where NaN marks an unavailable value,
/// or the length-m vector of values for state.plan.z in order. Throws
/// StateError after an alarm and DataError when a planned value is missing.
StepOutcome step(EngineState& state, const Vector& x);

/// Worker pool over [0, n). Exceptions are rethrown for the lowest failing index.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

/// Running maxima of the statistic for in-control streams run with h = +inf.
struct NullTrajectories {
    std::vector<std::vector<double>> running_max;  ///< one row per replication
    int horizon = 0;
};

NullTrajectories simulate_null_trajectories(const ModelConfig& cfg, const BasisDictionary& dict, int n_reps,
                                            int horizon, std::uint64_t seed, int workers = 1,
                                            const EngineOptions& opts = {});

struct ReplayArl {
    double arl = 0.0;      ///< mean of min(T, horizon)
    double arl_stderr = 0.0;
    int n_censored = 0;    ///< runs without an alarm by the horizon
};

/// Run lengths implied by threshold h on recorded trajectories.
ReplayArl replay_arl(const NullTrajectories& tr, double h);

struct CalibrationResult {
    double h = 0.0;
    double target = 0.0;
    double tol_rel = 0.0;
    double achieved_arl = 0.0;
    double arl_stderr = 0.0;
    int n_reps = 0;
    int horizon = 0;
    int n_censored = 0;
    int iterations = 0;
};

/// Bisect h on recorded trajectories until |ARL(h) - target| <= tol_rel * target.
CalibrationResult calibrate_from_trajectories(const NullTrajectories& tr, double target_arl0, double tol_rel);

CalibrationResult calibrate_threshold(const ModelConfig& cfg, const BasisDictionary& dict, double target_arl0,
                                      int n_reps, int horizon, double tol_rel, std::uint64_t seed, int workers = 1,
                                      const EngineOptions& opts = {});

struct RepOutcome {
    long T = -1;               ///< alarm step, -1 when none within the horizon
    bool false_alarm = false;  ///< alarm at or before tau
    long delay = -1;           ///< T - tau when T > tau
};

struct RunLengthSummary {
    double h = 0.0;
    int n_reps = 0;
    int n_false_alarm = 0;
    int n_never_alarmed = 0;
    int n_censored = 0;   ///< false alarms plus never-alarmed (never-alarmed only for null scenarios)
    int n_detected = 0;   ///< runs with T > tau
    bool null_scenario = false;
    bool arl0_defined = false;
    double arl0 = 0.0;    ///< mean of min(T, horizon), null scenarios only
    double arl0_stderr = 0.0;
    bool add_defined = false;
    double add = 0.0;
    double add_stderr = 0.0;
    double std_dd = 0.0;  ///< sd of delays; sd of run lengths for null scenarios
    std::vector<RepOutcome> reps;
};

/// Monte-Carlo run lengths for a scenario at threshold h.
RunLengthSummary evaluate(const Scenario& sc, double h, int n_reps, std::uint64_t seed, int workers = 1,
                          const EngineOptions& opts = {});

/// Per-replication seeds; tag 1 drives the stream, tag 2 the engine.
inline std::uint64_t stream_seed(std::uint64_t seed, int rep) { return derive_seed(seed, static_cast<std::uint64_t>(rep), 1); }
inline std::uint64_t engine_seed(std::uint64_t seed, int rep) { return derive_seed(seed, static_cast<std::uint64_t>(rep), 2); }

}  // namespace cdssd
