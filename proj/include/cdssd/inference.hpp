#pragma once

#include <json.hpp>

#include "cdssd/bases.hpp"
#include "cdssd/common.hpp"

namespace cdssd {

/// Fixed model hyperparameters.
struct ModelConfig {
    double sigma_e = 0.0;  ///< noise std, Sigma_e = sigma_e^2 I
    double sigma_b = 0.0;  ///< background prior std, Sigma_b = sigma_b^2 I
    Vector sigma_j;        ///< slab std per anomaly basis
    Vector w;              ///< prior inclusion probabilities
    double v = 0.0;        ///< spike shrink factor
    double lambda = 0.0;   ///< exponential decay rate, in (0, 0.1]
    int m = 0;             ///< sensing budget

    /// Same sigma_j and w for every one of k_a bases.
    static ModelConfig uniform(int k_a, double sigma_e, double sigma_b, double sigma_j, double w, double v,
                               double lambda, int m);

    /// Throws ConfigError on any range violation, DimensionError on size mismatch.
    void validate(int p, int k_a) const;
};

/// Variational factors q_j(theta_aj, r_j).
struct SpikeSlabPosterior {
    Vector mu_a;
    Vector s2;
    Vector alpha;

    /// mu_a o alpha.
    Vector mu_tilde() const { return mu_a.cwiseProduct(alpha); }

    /// mu_a = 0, s2 = sigma_j^2, alpha = w.
    static SpikeSlabPosterior prior(const ModelConfig& cfg);
};

/// Exponentially decayed sufficient statistics of the anomaly regression.
///
/// Raw sums follow raw <- (1 - lambda) raw + lambda new; dividing by mass
/// gives the normalized weighted sums.
struct DecayedStats {
    Matrix raw_M;       ///< decayed sum of B_aZ' B_aZ
    Vector raw_u;       ///< decayed sum of B_aZ' (x_Z - B_bZ theta_t)
    double raw_xx = 0;  ///< decayed sum of squared residual norms
    double mass = 0;
    long n = 0;

    static DecayedStats empty(int k_a);

    Matrix M() const { return raw_M / mass; }
    Vector u() const { return raw_u / mass; }
    double xx() const { return raw_xx / mass; }
};

/// Gaussian posterior of the background coefficients.
struct BackgroundPosterior {
    Vector theta_n;
    Matrix cov_b;

    /// theta_n = 0, cov_b = sigma_b^2 I.
    static BackgroundPosterior prior(const ModelConfig& cfg, int k_b);
};

/// Validates z against p and, when m > 0, the budget |z| = m.
void validate_subset(const IndexSet& z, int p, int m = 0);

/// One-step decayed update with residual x_z - B_bZ theta_frozen.
DecayedStats absorb_sample(const DecayedStats& stats, const Vector& x_z, const IndexSet& z, const Vector& theta_frozen,
                           const BasisDictionary& dict, const ModelConfig& cfg);

/// One ascending-j pass of the coordinate updates for s2, mu_a, alpha.
SpikeSlabPosterior vb_coordinate_sweep(const SpikeSlabPosterior& post, const DecayedStats& stats,
                                       const ModelConfig& cfg);

/// Evidence lower bound up to data-only additive constants.
double elbo(const SpikeSlabPosterior& post, const DecayedStats& stats, const ModelConfig& cfg);

/// Conjugate update of the background given the current anomaly mean.
BackgroundPosterior update_background(const Vector& x_z, const IndexSet& z, const SpikeSlabPosterior& post,
                                      const BasisDictionary& dict, const ModelConfig& cfg);

struct FitOptions {
    double tol = 1e-6;
    int max_iters = 100;
};

struct FitResult {
    SpikeSlabPosterior post;
    BackgroundPosterior bg;
    DecayedStats stats;  ///< includes the current sample, residual frozen at bg.theta_n
    bool converged = false;
    int iterations = 0;
};

/// Alternate sweeps and background updates for the newest sample.
FitResult fit(const Vector& x_z, const IndexSet& z, const SpikeSlabPosterior& prev_post, const DecayedStats& prev_stats,
              const BasisDictionary& dict, const ModelConfig& cfg, const FitOptions& opts = {});

/// {step, mu_a[], s2[], alpha[], theta_n[], converged}
nlohmann::json posterior_record(long step, const SpikeSlabPosterior& post, const BackgroundPosterior& bg,
                                bool converged);

}  // namespace cdssd
