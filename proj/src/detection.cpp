#include "cdssd/detection.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cdssd/errors.hpp"
#include "cdssd/linalg.hpp"

namespace cdssd {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_inputs(const DetectionInputs& in, const BasisDictionary& dict) {
    validate_subset(in.z, dict.p());
    if (in.x_z.size() != static_cast<Eigen::Index>(in.z.size())) throw DimensionError("x_z length differs from |z|");
    if (in.post.mu_a.size() != dict.k_a() || in.post.alpha.size() != dict.k_a() || in.post.s2.size() != dict.k_a())
        throw DimensionError("posterior dimension differs from k_a");
    if (in.bg.theta_n.size() != dict.k_b() || in.bg.cov_b.rows() != dict.k_b() || in.bg.cov_b.cols() != dict.k_b())
        throw DimensionError("background posterior dimension differs from k_b");
}

double log_sum_exp(const std::vector<double>& v) {
    double mx = -kInf;
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

// Quantities shared by both hypotheses.
struct Common {
    int m = 0, ka = 0, kb = 0;
    double se2 = 0.0;
    Matrix baz, bbz;
    double xx = 0.0;            // x' Sigma_e^-1 x
    double logdet_cov = 0.0;    // log |Sigma_b~|
    double logdet_h = 0.0;      // log |H|
    Eigen::LLT<Matrix> h_llt;
    Vector theta0, theta1;
    double t0 = 0.0, t1 = 0.0;  // theta' Sigma_b~^-1 theta
    Vector g0, g1;              // G^[0], G^[1] as column vectors
    double g0_hinv_g0 = 0.0;
};

Common prepare(const DetectionInputs& in, const BasisDictionary& dict, const ModelConfig& cfg) {
    check_inputs(in, dict);
    Common c;
    c.m = static_cast<int>(in.z.size());
    c.ka = dict.k_a();
    c.kb = dict.k_b();
    c.se2 = cfg.sigma_e * cfg.sigma_e;
    c.baz = gather_rows(dict.b_a(), in.z);
    c.bbz = gather_rows(dict.b_b(), in.z);
    c.xx = in.x_z.squaredNorm() / c.se2;
    if (c.kb == 0) return c;
    const auto cov_llt = spd_factor(in.bg.cov_b, "background covariance");
    c.logdet_cov = log_det(cov_llt);
    const Matrix cov_inv = cov_llt.solve(Matrix::Identity(c.kb, c.kb));
    Matrix h = c.bbz.transpose() * c.bbz / c.se2 + cov_inv;
    c.h_llt = spd_factor(h, "H");
    c.logdet_h = log_det(c.h_llt);
    c.theta0 = background_mean_h0(in.x_z, in.z, dict, cfg);
    c.theta1 = in.bg.theta_n;
    const Vector bx = c.bbz.transpose() * in.x_z / c.se2;
    c.g0 = bx + cov_inv * c.theta0;
    c.g1 = bx + cov_inv * c.theta1;
    c.t0 = c.theta0.dot(cov_inv * c.theta0);
    c.t1 = c.theta1.dot(cov_inv * c.theta1);
    c.g0_hinv_g0 = c.g0.dot(c.h_llt.solve(c.g0));
    return c;
}

// Per-pattern pieces of the H1 integral.
struct PatternTerms {
    double log_prior = 0.0;  // log p(r | H1)
    double logdet = 0.0;     // log|K| + log|A| + log|H - C A^-1 C'|
    double quad = 0.0;       // mu_r' K^-1 mu_r - D A^-1 D' - (G1 - D A^-1 C')(H - C A^-1 C')^-1 (.)'
};

template <class F>
void for_each_pattern(const DetectionInputs& in, const Common& c, const ModelConfig& cfg, F&& visit) {
    if (c.ka > kMaxExactKa)
        throw CapabilityError("exact Bayes factor enumerates 2^k_a patterns; k_a = " + std::to_string(c.ka) +
                              " exceeds " + std::to_string(kMaxExactKa) + ", use lambda_stat");
    const Matrix q = c.baz.transpose() * c.baz / c.se2;
    const Vector bx = c.baz.transpose() * in.x_z / c.se2;
    const Matrix cm = c.kb > 0 ? Matrix(c.bbz.transpose() * c.baz / c.se2) : Matrix(0, c.ka);
    const std::uint64_t n_patterns = std::uint64_t{1} << c.ka;
    Vector sk(c.ka), kinv_mu(c.ka);
    for (std::uint64_t bits = 0; bits < n_patterns; ++bits) {
        PatternTerms t;
        double mu_k_mu = 0.0;
        for (int j = 0; j < c.ka; ++j) {
            const bool on = (bits >> j) & 1U;
            const double a = in.post.alpha(j);
            t.log_prior += on ? std::log(a) : std::log1p(-a);
            const double kj = (on ? 1.0 : cfg.v) * in.post.s2(j);
            sk(j) = std::sqrt(kj);
            kinv_mu(j) = on ? in.post.mu_a(j) / kj : 0.0;
            if (on) mu_k_mu += in.post.mu_a(j) * in.post.mu_a(j) / kj;
        }
        // A = K^-1/2 S K^-1/2 with S = I + K^1/2 Q K^1/2
        Matrix s = sk.asDiagonal() * q * sk.asDiagonal();
        s.diagonal().array() += 1.0;
        const auto s_llt = spd_factor(s, "A");
        t.logdet = log_det(s_llt);
        const Vector d = bx + kinv_mu;
        const Vector skd = sk.cwiseProduct(d);
        const Vector s_skd = s_llt.solve(skd);
        const double d_ainv_d = skd.dot(s_skd);
        t.quad = mu_k_mu - d_ainv_d;
        if (c.kb > 0) {
            const Matrix csk = cm * sk.asDiagonal();
            const Matrix schur = c.h_llt.reconstructedMatrix() - csk * s_llt.solve(csk.transpose());
            const auto schur_llt = spd_factor(schur, "H - C A^-1 C'");
            t.logdet += log_det(schur_llt);
            const Vector g = c.g1 - csk * s_skd;
            t.quad -= g.dot(schur_llt.solve(g));
        }
        visit(t);
    }
}

}  // namespace

Vector background_mean_h0(const Vector& x_z, const IndexSet& z, const BasisDictionary& dict, const ModelConfig& cfg) {
    SpikeSlabPosterior zero;
    zero.mu_a = Vector::Zero(dict.k_a());
    zero.alpha = Vector::Zero(dict.k_a());
    zero.s2 = Vector::Ones(dict.k_a());
    return update_background(x_z, z, zero, dict, cfg).theta_n;
}

double marginal_h0(const DetectionInputs& in, const BasisDictionary& dict, const ModelConfig& cfg) {
    const Common c = prepare(in, dict, cfg);
    const double log_c1 = -0.5 * (c.m * kLog2Pi + c.logdet_cov + c.m * std::log(c.se2) + c.logdet_h);
    return log_c1 - 0.5 * (c.xx + c.t0 - c.g0_hinv_g0);
}

double marginal_h1_exact(const DetectionInputs& in, const BasisDictionary& dict, const ModelConfig& cfg) {
    const Common c = prepare(in, dict, cfg);
    const double base = -0.5 * (c.m * kLog2Pi + c.logdet_cov + c.m * std::log(c.se2)) - 0.5 * (c.xx + c.t1);
    std::vector<double> terms;
    terms.reserve(std::size_t{1} << c.ka);
    for_each_pattern(in, c, cfg, [&](const PatternTerms& t) {
        terms.push_back(t.log_prior - 0.5 * t.logdet - 0.5 * t.quad);
    });
    return base + log_sum_exp(terms);
}

double log_pbf_exact(const DetectionInputs& in, const BasisDictionary& dict, const ModelConfig& cfg) {
    const Common c = prepare(in, dict, cfg);
    // log C3 = (log|H| - log|K| - log|A| - log|H - C A^-1 C'|) / 2
    const double shared = 0.5 * c.logdet_h - 0.5 * (c.g0_hinv_g0 + c.t1 - c.t0);
    std::vector<double> terms;
    terms.reserve(std::size_t{1} << c.ka);
    for_each_pattern(in, c, cfg, [&](const PatternTerms& t) {
        terms.push_back(t.log_prior - 0.5 * t.logdet - 0.5 * t.quad);
    });
    return shared + log_sum_exp(terms);
}

double lambda_stat(const DetectionInputs& in, const BasisDictionary& dict, const ModelConfig&) {
    check_inputs(in, dict);
    const Matrix baz = gather_rows(dict.b_a(), in.z);
    const Vector c = baz * in.post.mu_tilde();
    Vector resid = in.x_z;
    double cross = 0.0, proj_cc = 0.0;
    if (dict.k_b() > 0) {
        const Matrix bbz = gather_rows(dict.b_b(), in.z);
        resid -= bbz * in.bg.theta_n;
        const ColumnProjector proj(bbz);
        cross = proj.bilinear(c, resid);
        proj_cc = proj.quad(c);
    }
    double spread = 0.0;
    for (int j = 0; j < dict.k_a(); ++j) {
        const double mu = in.post.mu_a(j), a = in.post.alpha(j);
        spread += baz.col(j).squaredNorm() * mu * mu * a * (1.0 - a);
    }
    return 2.0 * (c.dot(resid) - cross) - (c.squaredNorm() + spread) + proj_cc;
}

}  // namespace cdssd
