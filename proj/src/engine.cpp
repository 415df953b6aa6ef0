#include "cdssd/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "cdssd/detection.hpp"
#include "cdssd/errors.hpp"

namespace cdssd {

namespace {

// Compensated summation so aggregates do not depend on grouping.
struct KahanSum {
    double sum = 0.0, comp = 0.0;
    void add(double x) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
};

struct MeanSe {
    double mean = 0.0, se = 0.0, sd = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
    MeanSe r;
    if (v.empty()) return r;
    KahanSum s;
    for (double x : v) s.add(x);
    r.mean = s.sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        KahanSum ss;
        for (double x : v) ss.add((x - r.mean) * (x - r.mean));
        r.sd = std::sqrt(ss.sum / static_cast<double>(v.size() - 1));
        r.se = r.sd / std::sqrt(static_cast<double>(v.size()));
    }
    return r;
}

}  // namespace

EngineState init(const ModelConfig& cfg, const BasisDictionary& dict, double h, std::uint64_t seed,
                 const EngineOptions& opts) {
    cfg.validate(dict.p(), dict.k_a());
    if (std::isnan(h)) throw ConfigError("threshold must not be NaN");
    EngineState s{cfg,
                  dict,
                  opts,
                  SpikeSlabPosterior::prior(cfg),
                  BackgroundPosterior::prior(cfg, dict.k_b()),
                  DecayedStats::empty(dict.k_a()),
                  {},
                  0,
                  false,
                  h,
                  true,
                  Rng(seed)};
    s.plan = random_plan(dict.p(), cfg.m, s.rng);
    return s;
}

StepOutcome step(EngineState& s, const Vector& x) {
    if (s.alarmed) throw StateError("engine already alarmed at step " + std::to_string(s.step) + "; no further input accepted");
    const long t = s.step + 1;
    const auto& z = s.plan.z;
    const int m = static_cast<int>(z.size());
    Vector x_z(m);
    if (x.size() == s.dict.p()) {
        for (int r = 0; r < m; ++r) x_z(r) = x(z[static_cast<std::size_t>(r)]);
    } else if (x.size() == m) {
        x_z = x;
    } else {
        throw DimensionError("step " + std::to_string(t) + ": observation has " + std::to_string(x.size()) +
                             " values, expected p = " + std::to_string(s.dict.p()) + " or m = " + std::to_string(m));
    }
    for (int r = 0; r < m; ++r)
        if (!std::isfinite(x_z(r)))
            throw DataError("step " + std::to_string(t) + ": planned coordinate " + std::to_string(z[static_cast<std::size_t>(r)]) +
                            " is missing");

    FitResult f = fit(x_z, z, s.post, s.stats, s.dict, s.cfg, s.opts.fit);
    s.post = std::move(f.post);
    s.bg = std::move(f.bg);
    s.stats = std::move(f.stats);
    s.last_converged = f.converged;

    StepOutcome out;
    out.step = t;
    out.observed = z;
    out.converged = f.converged;
    out.lambda = lambda_stat(DetectionInputs{x_z, z, s.post, s.bg}, s.dict, s.cfg);
    if (!std::isfinite(out.lambda)) throw NumericalError("step " + std::to_string(t) + ": detection statistic is not finite");
    s.step = t;
    if (alarm_check(out.lambda, s.h)) {
        s.alarmed = out.alarmed = true;
        return out;
    }
    const Vector theta_hat = draw_anomaly_sample(s.post, s.cfg, s.rng);
    const Vector x1_hat = synthesize_anomaly_signal(theta_hat, s.dict, s.cfg, s.rng);
    if (s.opts.sampler == SamplerKind::Oracle) {
        s.plan = oracle_select(x1_hat, s.post, s.bg, s.dict, s.cfg, s.cfg.m, s.rng);
    } else {
        s.plan = select_top_m(score_variables(x1_hat, s.post, s.dict), s.cfg.m, s.rng);
    }
    return out;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    workers = std::clamp(workers, 1, n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex mu;
    int failed_index = n;
    std::exception_ptr failure;
    auto run = [&]() {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

NullTrajectories simulate_null_trajectories(const ModelConfig& cfg, const BasisDictionary& dict, int n_reps,
                                            int horizon, std::uint64_t seed, int workers, const EngineOptions& opts) {
    if (n_reps < 1) throw ConfigError("calibration needs at least one replication");
    if (horizon < 1) throw ConfigError("horizon must be positive");
    const Scenario sc{"null", dict, cfg, kNoChange, {}, horizon, false, 0.0};
    sc.validate();
    NullTrajectories tr;
    tr.horizon = horizon;
    tr.running_max.resize(static_cast<std::size_t>(n_reps));
    parallel_for(n_reps, workers, [&](int rep) {
        StreamGenerator gen(sc, stream_seed(seed, rep));
        EngineState st = init(cfg, dict, kInf, engine_seed(seed, rep), opts);
        auto& row = tr.running_max[static_cast<std::size_t>(rep)];
        row.resize(static_cast<std::size_t>(horizon));
        double mx = -kInf;
        for (int t = 0; t < horizon; ++t) {
            mx = std::max(mx, step(st, gen.next()).lambda);
            row[static_cast<std::size_t>(t)] = mx;
        }
    });
    return tr;
}

ReplayArl replay_arl(const NullTrajectories& tr, double h) {
    std::vector<double> lengths;
    lengths.reserve(tr.running_max.size());
    ReplayArl r;
    for (const auto& row : tr.running_max) {
        // first t with running max > h
        const auto it = std::upper_bound(row.begin(), row.end(), h);
        if (it == row.end()) {
            ++r.n_censored;
            lengths.push_back(static_cast<double>(tr.horizon));
        } else {
            lengths.push_back(static_cast<double>(it - row.begin() + 1));
        }
    }
    const MeanSe ms = mean_se(lengths);
    r.arl = ms.mean;
    r.arl_stderr = ms.se;
    return r;
}

CalibrationResult calibrate_from_trajectories(const NullTrajectories& tr, double target, double tol_rel) {
    if (!(target > 1.0)) throw CalibrationError("target ARL0 must exceed 1");
    if (!(tol_rel > 0.0)) throw CalibrationError("calibration tolerance must be positive");
    if (!(target < tr.horizon / 2.0))
        throw CalibrationError("target ARL0 " + std::to_string(target) + " is not below horizon/2 = " +
                               std::to_string(tr.horizon / 2.0) + "; censoring would bias the estimate");
    if (tr.running_max.empty()) throw CalibrationError("no trajectories to calibrate on");
    double lo = kInf, hi = -kInf;
    for (const auto& row : tr.running_max) {
        lo = std::min(lo, row.front());
        hi = std::max(hi, row.back());
    }
    lo -= 1.0 + std::abs(lo);  // every run alarms at t = 1
    const ReplayArl top = replay_arl(tr, hi);
    if (top.arl < target * (1.0 - tol_rel))
        throw CalibrationError("even the largest observed statistic gives ARL " + std::to_string(top.arl) +
                               " below target " + std::to_string(target) + "; raise the horizon or the replications");
    CalibrationResult res;
    res.target = target;
    res.tol_rel = tol_rel;
    res.n_reps = static_cast<int>(tr.running_max.size());
    res.horizon = tr.horizon;
    double arl_lo = 1.0, arl_hi = top.arl;
    for (int it = 1; it <= 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) break;
        const ReplayArl r = replay_arl(tr, mid);
        res.iterations = it;
        if (std::abs(r.arl - target) <= tol_rel * target) {
            res.h = mid;
            res.achieved_arl = r.arl;
            res.arl_stderr = r.arl_stderr;
            res.n_censored = r.n_censored;
            return res;
        }
        if (r.arl < target) {
            lo = mid;
            arl_lo = r.arl;
        } else {
            hi = mid;
            arl_hi = r.arl;
        }
    }
    throw CalibrationError("ARL jumps from " + std::to_string(arl_lo) + " to " + std::to_string(arl_hi) + " near h = " +
                           std::to_string(lo) + " without entering the target band " + std::to_string(target) +
                           " +/- " + std::to_string(tol_rel * 100.0) + "%; use more replications or a wider tolerance");
}

CalibrationResult calibrate_threshold(const ModelConfig& cfg, const BasisDictionary& dict, double target_arl0,
                                      int n_reps, int horizon, double tol_rel, std::uint64_t seed, int workers,
                                      const EngineOptions& opts) {
    if (!(target_arl0 < horizon / 2.0))
        throw CalibrationError("target ARL0 " + std::to_string(target_arl0) + " is not below horizon/2 = " +
                               std::to_string(horizon / 2.0));
    const NullTrajectories tr = simulate_null_trajectories(cfg, dict, n_reps, horizon, seed, workers, opts);
    return calibrate_from_trajectories(tr, target_arl0, tol_rel);
}

RunLengthSummary evaluate(const Scenario& sc, double h, int n_reps, std::uint64_t seed, int workers,
                          const EngineOptions& opts) {
    sc.validate();
    if (n_reps < 1) throw ConfigError("evaluation needs at least one replication");
    RunLengthSummary sum;
    sum.h = h;
    sum.n_reps = n_reps;
    sum.null_scenario = sc.is_null();
    sum.reps.resize(static_cast<std::size_t>(n_reps));
    const long tau = sum.null_scenario ? kNoChange : sc.tau;
    parallel_for(n_reps, workers, [&](int rep) {
        StreamGenerator gen(sc, stream_seed(seed, rep));
        EngineState st = init(sc.cfg, sc.dict, h, engine_seed(seed, rep), opts);
        RepOutcome& out = sum.reps[static_cast<std::size_t>(rep)];
        for (int t = 0; t < sc.horizon; ++t) {
            if (step(st, gen.next()).alarmed) {
                out.T = st.step;
                break;
            }
        }
        if (out.T > 0) {
            out.false_alarm = tau != kNoChange && out.T <= tau;
            if (tau != kNoChange && out.T > tau) out.delay = out.T - tau;
        }
    });
    std::vector<double> delays, lengths;
    for (const auto& r : sum.reps) {
        if (r.T < 0) ++sum.n_never_alarmed;
        if (r.false_alarm) ++sum.n_false_alarm;
        if (r.delay > 0) delays.push_back(static_cast<double>(r.delay));
        lengths.push_back(r.T < 0 ? static_cast<double>(sc.horizon) : static_cast<double>(r.T));
    }
    sum.n_detected = static_cast<int>(delays.size());
    if (sum.null_scenario) {
        sum.n_censored = sum.n_never_alarmed;
        const MeanSe ms = mean_se(lengths);
        sum.arl0_defined = true;
        sum.arl0 = ms.mean;
        sum.arl0_stderr = ms.se;
        sum.std_dd = ms.sd;
    } else {
        sum.n_censored = sum.n_false_alarm + sum.n_never_alarmed;
        if (!delays.empty()) {
            const MeanSe ms = mean_se(delays);
            sum.add_defined = true;
            sum.add = ms.mean;
            sum.add_stderr = ms.se;
            sum.std_dd = ms.sd;
        }
    }
    return sum;
}

}  // namespace cdssd
