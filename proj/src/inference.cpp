#include "cdssd/inference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cdssd/errors.hpp"
#include "cdssd/linalg.hpp"

namespace cdssd {

namespace {

constexpr double kAlphaFloor = 1e-12;

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

// In-place ascending-j sweep with normalized statistics.
void sweep_inplace(SpikeSlabPosterior& q, const Matrix& M, const Vector& u, const ModelConfig& cfg) {
    const Eigen::Index k = M.rows();
    const double se2 = cfg.sigma_e * cfg.sigma_e;
    Vector r = M * q.mu_tilde();
    for (Eigen::Index j = 0; j < k; ++j) {
        const double old = q.alpha(j) * q.mu_a(j);
        const double mjj = M(j, j);
        const double sj2 = cfg.sigma_j(j) * cfg.sigma_j(j);
        const double s2 = 1.0 / (mjj / se2 + 1.0 / sj2);
        const double mu = s2 / se2 * (u(j) - (r(j) - mjj * old));
        const double lg = logit(cfg.w(j)) + mu * mu / (2.0 * sj2) + mjj / (2.0 * se2) * (mu * mu - s2 + cfg.v * s2);
        const double a = std::clamp(sigmoid(lg), kAlphaFloor, 1.0 - kAlphaFloor);
        q.s2(j) = s2;
        q.mu_a(j) = mu;
        q.alpha(j) = a;
        const double delta = a * mu - old;
        if (delta != 0.0) r += M.col(j) * delta;
    }
}

double max_abs_diff(const Vector& a, const Vector& b) {
    return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

ModelConfig ModelConfig::uniform(int k_a, double sigma_e, double sigma_b, double sigma_j, double w, double v,
                                 double lambda, int m) {
    ModelConfig c;
    c.sigma_e = sigma_e;
    c.sigma_b = sigma_b;
    c.sigma_j = Vector::Constant(k_a, sigma_j);
    c.w = Vector::Constant(k_a, w);
    c.v = v;
    c.lambda = lambda;
    c.m = m;
    return c;
}

void ModelConfig::validate(int p, int k_a) const {
    if (!(sigma_e > 0.0) || !std::isfinite(sigma_e)) throw ConfigError("sigma_e must be positive");
    if (!(sigma_b > 0.0) || !std::isfinite(sigma_b)) throw ConfigError("sigma_b must be positive");
    if (!(v > 0.0 && v < 1.0)) throw ConfigError("v must lie in (0, 1)");
    if (!(lambda > 0.0 && lambda <= 0.1)) throw ConfigError("lambda must lie in (0, 0.1]");
    if (m < 1 || m > p) throw ConfigError("m must lie in [1, p]");
    if (sigma_j.size() != k_a || w.size() != k_a)
        throw DimensionError("sigma_j and w need k_a = " + std::to_string(k_a) + " entries");
    for (Eigen::Index j = 0; j < k_a; ++j) {
        if (!(sigma_j(j) > 0.0) || !std::isfinite(sigma_j(j))) throw ConfigError("sigma_j entries must be positive");
        if (!(w(j) > 0.0 && w(j) < 1.0)) throw ConfigError("w entries must lie in (0, 1)");
    }
}

SpikeSlabPosterior SpikeSlabPosterior::prior(const ModelConfig& cfg) {
    SpikeSlabPosterior q;
    q.mu_a = Vector::Zero(cfg.sigma_j.size());
    q.s2 = cfg.sigma_j.cwiseAbs2();
    q.alpha = cfg.w;
    return q;
}

DecayedStats DecayedStats::empty(int k_a) {
    DecayedStats s;
    s.raw_M = Matrix::Zero(k_a, k_a);
    s.raw_u = Vector::Zero(k_a);
    return s;
}

BackgroundPosterior BackgroundPosterior::prior(const ModelConfig& cfg, int k_b) {
    BackgroundPosterior b;
    b.theta_n = Vector::Zero(k_b);
    b.cov_b = cfg.sigma_b * cfg.sigma_b * Matrix::Identity(k_b, k_b);
    return b;
}

void validate_subset(const IndexSet& z, int p, int m) {
    if (m > 0 && static_cast<int>(z.size()) != m)
        throw DimensionError("index set has " + std::to_string(z.size()) + " entries, budget is " + std::to_string(m));
    if (z.empty()) throw DimensionError("index set is empty");
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i] < 0 || z[i] >= p)
            throw IndexError("index " + std::to_string(z[i]) + " outside [0, " + std::to_string(p) + ")");
        if (i > 0 && z[i] <= z[i - 1]) throw IndexError("index set must be strictly increasing");
    }
}

DecayedStats absorb_sample(const DecayedStats& stats, const Vector& x_z, const IndexSet& z, const Vector& theta_frozen,
                           const BasisDictionary& dict, const ModelConfig& cfg) {
    validate_subset(z, dict.p(), cfg.m);
    if (x_z.size() != static_cast<Eigen::Index>(z.size())) throw DimensionError("x_z length differs from |z|");
    if (theta_frozen.size() != dict.k_b()) throw DimensionError("theta_frozen length differs from k_b");
    if (stats.raw_M.rows() != dict.k_a()) throw DimensionError("stats dimension differs from k_a");
    const Matrix baz = gather_rows(dict.b_a(), z);
    Vector resid = x_z;
    if (dict.k_b() > 0) resid -= gather_rows(dict.b_b(), z) * theta_frozen;
    const double lam = cfg.lambda, keep = 1.0 - cfg.lambda;
    DecayedStats out;
    out.raw_M = keep * stats.raw_M + lam * (baz.transpose() * baz);
    out.raw_u = keep * stats.raw_u + lam * (baz.transpose() * resid);
    out.raw_xx = keep * stats.raw_xx + lam * resid.squaredNorm();
    out.mass = keep * stats.mass + lam;
    out.n = stats.n + 1;
    return out;
}

SpikeSlabPosterior vb_coordinate_sweep(const SpikeSlabPosterior& post, const DecayedStats& stats,
                                       const ModelConfig& cfg) {
    if (stats.n < 1) throw StateError("vb_coordinate_sweep needs at least one absorbed sample");
    SpikeSlabPosterior q = post;
    sweep_inplace(q, stats.M(), stats.u(), cfg);
    return q;
}

double elbo(const SpikeSlabPosterior& q, const DecayedStats& stats, const ModelConfig& cfg) {
    if (stats.n < 1) throw StateError("elbo needs at least one absorbed sample");
    const Matrix M = stats.M();
    const Vector u = stats.u();
    const double se2 = cfg.sigma_e * cfg.sigma_e;
    const Vector mt = q.mu_tilde();
    const Eigen::Index k = M.rows();
    // expected weighted residual sum of squares
    double quad = mt.dot(M * mt);
    for (Eigen::Index j = 0; j < k; ++j) {
        quad -= M(j, j) * mt(j) * mt(j);
        quad += M(j, j) * ((q.mu_a(j) * q.mu_a(j) + q.s2(j)) * q.alpha(j) + cfg.v * q.s2(j) * (1.0 - q.alpha(j)));
    }
    double z = -(stats.xx() - 2.0 * u.dot(mt) + quad) / (2.0 * se2);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double sj2 = cfg.sigma_j(j) * cfg.sigma_j(j);
        const double a = q.alpha(j), s2 = q.s2(j), mu = q.mu_a(j), w = cfg.w(j);
        z += 0.5 - s2 / (2.0 * sj2) + 0.5 * std::log(s2 / sj2);
        z += a * (std::log(w) - std::log(a) - mu * mu / (2.0 * sj2));
        z += (1.0 - a) * (std::log1p(-w) - std::log1p(-a));
    }
    return z;
}

BackgroundPosterior update_background(const Vector& x_z, const IndexSet& z, const SpikeSlabPosterior& post,
                                      const BasisDictionary& dict, const ModelConfig& cfg) {
    validate_subset(z, dict.p());
    if (x_z.size() != static_cast<Eigen::Index>(z.size())) throw DimensionError("x_z length differs from |z|");
    const int kb = dict.k_b();
    BackgroundPosterior bg;
    if (kb == 0) {
        bg.theta_n.resize(0);
        bg.cov_b.resize(0, 0);
        return bg;
    }
    const double se2 = cfg.sigma_e * cfg.sigma_e;
    const Matrix bbz = gather_rows(dict.b_b(), z);
    const Matrix baz = gather_rows(dict.b_a(), z);
    Matrix prec = bbz.transpose() * bbz / se2;
    prec.diagonal().array() += 1.0 / (cfg.sigma_b * cfg.sigma_b);
    const auto llt = spd_factor(prec, "update_background");
    bg.theta_n = llt.solve(bbz.transpose() * (x_z - baz * post.mu_tilde()) / se2);
    bg.cov_b = llt.solve(Matrix::Identity(kb, kb));
    return bg;
}

FitResult fit(const Vector& x_z, const IndexSet& z, const SpikeSlabPosterior& prev_post, const DecayedStats& prev_stats,
              const BasisDictionary& dict, const ModelConfig& cfg, const FitOptions& opts) {
    if (!(opts.tol > 0.0)) throw ConfigError("fit tolerance must be positive");
    if (opts.max_iters < 1) throw ConfigError("fit needs max_iters >= 1");
    validate_subset(z, dict.p(), cfg.m);
    if (x_z.size() != static_cast<Eigen::Index>(z.size())) throw DimensionError("x_z length differs from |z|");
    const int ka = dict.k_a(), kb = dict.k_b();
    if (prev_stats.raw_M.rows() != ka || prev_post.mu_a.size() != ka) throw DimensionError("state dimension differs from k_a");

    const double se2 = cfg.sigma_e * cfg.sigma_e;
    const double lam = cfg.lambda, keep = 1.0 - cfg.lambda;
    const Matrix baz = gather_rows(dict.b_a(), z);
    const Matrix bbz = gather_rows(dict.b_b(), z);
    const Vector ax = baz.transpose() * x_z;
    const Matrix ab = baz.transpose() * bbz;

    FitResult res;
    res.stats.raw_M = keep * prev_stats.raw_M + lam * (baz.transpose() * baz);
    res.stats.mass = keep * prev_stats.mass + lam;
    res.stats.n = prev_stats.n + 1;
    const Matrix M = res.stats.raw_M / res.stats.mass;
    const Vector raw_u_base = keep * prev_stats.raw_u;

    Eigen::LLT<Matrix> llt;
    Vector bx;
    if (kb > 0) {
        Matrix prec = bbz.transpose() * bbz / se2;
        prec.diagonal().array() += 1.0 / (cfg.sigma_b * cfg.sigma_b);
        llt = spd_factor(prec, "fit");
        bx = bbz.transpose() * x_z;
        res.bg.cov_b = llt.solve(Matrix::Identity(kb, kb));
    } else {
        res.bg.cov_b.resize(0, 0);
    }
    auto background_mean = [&](const Vector& mt) -> Vector {
        if (kb == 0) return Vector(0);
        return llt.solve((bx - ab.transpose() * mt) / se2);
    };

    res.post = prev_post;
    res.bg.theta_n = background_mean(Vector::Zero(ka));
    for (int it = 1; it <= opts.max_iters; ++it) {
        const SpikeSlabPosterior before = res.post;
        const Vector theta_before = res.bg.theta_n;
        Vector u = raw_u_base + lam * (kb > 0 ? Vector(ax - ab * res.bg.theta_n) : ax);
        u /= res.stats.mass;
        sweep_inplace(res.post, M, u, cfg);
        res.bg.theta_n = background_mean(res.post.mu_tilde());
        res.iterations = it;
        const double change = std::max({max_abs_diff(res.post.mu_a, before.mu_a),
                                        max_abs_diff(res.post.alpha, before.alpha),
                                        max_abs_diff(res.bg.theta_n, theta_before)});
        if (change < opts.tol) {
            res.converged = true;
            break;
        }
    }

    Vector resid = x_z;
    if (kb > 0) resid -= bbz * res.bg.theta_n;
    res.stats.raw_u = raw_u_base + lam * (kb > 0 ? Vector(ax - ab * res.bg.theta_n) : ax);
    res.stats.raw_xx = keep * prev_stats.raw_xx + lam * resid.squaredNorm();
    return res;
}

nlohmann::json posterior_record(long step, const SpikeSlabPosterior& post, const BackgroundPosterior& bg,
                                bool converged) {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return nlohmann::json{{"step", step},
                          {"mu_a", vec(post.mu_a)},
                          {"s2", vec(post.s2)},
                          {"alpha", vec(post.alpha)},
                          {"theta_n", vec(bg.theta_n)},
                          {"converged", converged}};
}

}  // namespace cdssd
