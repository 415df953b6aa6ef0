#pragma once

#include "cdssd/bases.hpp"
#include "cdssd/common.hpp"
#include "cdssd/inference.hpp"

namespace cdssd {

/// Snapshot consumed by the detection statistics. Holds references only.
struct DetectionInputs {
    const Vector& x_z;
    const IndexSet& z;
    const SpikeSlabPosterior& post;
    const BackgroundPosterior& bg;  ///< theta_n is the H1 background mean
};

/// Largest k_a the exact statistics will enumerate.
inline constexpr int kMaxExactKa = 20;

/// log p(x_z | H0): background integrated against N(theta^[0], cov_b).
double marginal_h0(const DetectionInputs& in, const BasisDictionary& dict, const ModelConfig& cfg);

/// log p(x_z | H1): mixture over all inclusion patterns r.
double marginal_h1_exact(const DetectionInputs& in, const BasisDictionary& dict, const ModelConfig& cfg);

/// log posterior Bayes factor with the shared normalizing constants cancelled.
double log_pbf_exact(const DetectionInputs& in, const BasisDictionary& dict, const ModelConfig& cfg);

/// First-order statistic used online.
double lambda_stat(const DetectionInputs& in, const BasisDictionary& dict, const ModelConfig& cfg);

inline bool alarm_check(double stat, double h) { return stat > h; }

/// theta^[0]: background posterior mean with the anomaly mean set to zero.
Vector background_mean_h0(const Vector& x_z, const IndexSet& z, const BasisDictionary& dict, const ModelConfig& cfg);

}  // namespace cdssd
