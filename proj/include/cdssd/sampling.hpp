#pragma once

#include <optional>

#include "cdssd/bases.hpp"
#include "cdssd/common.hpp"
#include "cdssd/inference.hpp"

namespace cdssd {

/// Variables to observe at the next step.
struct SensingPlan {
    IndexSet z;                    ///< sorted, size m
    std::optional<Vector> scores;  ///< per-variable scores behind the choice, if any
};

/// Largest number of subsets oracle_select will enumerate.
inline constexpr double kMaxOracleSubsets = 1e6;

/// Floor on slab variance when drawing.
inline constexpr double kDrawVarFloor = 1e-18;

/// Uniformly random m-subset of {0..p-1}.
SensingPlan random_plan(int p, int m, Rng& rng);

/// Draw theta_a from the spike-slab posterior.
Vector draw_anomaly_sample(const SpikeSlabPosterior& post, const ModelConfig& cfg, Rng& rng);

/// B_a theta_hat + fresh N(0, sigma_e^2 I) noise.
Vector synthesize_anomaly_signal(const Vector& theta_hat, const BasisDictionary& dict, const ModelConfig& cfg, Rng& rng);

/// Per-variable score 2 x_i (B_ai mu~) - mu' (B_ai' B_ai o Abar) mu, for every i.
Vector score_variables(const Vector& x1_hat, const SpikeSlabPosterior& post, const BasisDictionary& dict);

/// Indices of the m largest scores; exact ties are broken uniformly at random.
SensingPlan select_top_m(const Vector& scores, int m, Rng& rng);

/// Non-additive set objective with the background projection on Z.
double oracle_objective(const IndexSet& z, const Vector& x1_hat, const SpikeSlabPosterior& post,
                        const BasisDictionary& dict);

/// Maximizer of oracle_objective over all m-subsets; ties resolved uniformly at random.
SensingPlan oracle_select(const Vector& x1_hat, const SpikeSlabPosterior& post, const BackgroundPosterior& bg,
                          const BasisDictionary& dict, const ModelConfig& cfg, int m, Rng& rng);

}  // namespace cdssd
