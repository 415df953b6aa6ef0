#include "cdssd/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cdssd/errors.hpp"
#include "cdssd/linalg.hpp"

namespace cdssd {

namespace {

double log_binomial(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Quadratic-penalty part of the score for row i: mu' (b_i' b_i o Abar) mu.
Vector row_penalty(const Matrix& ba, const SpikeSlabPosterior& post, const Vector& c) {
    Vector spread = post.mu_a.cwiseAbs2().cwiseProduct(post.alpha).cwiseProduct((1.0 - post.alpha.array()).matrix());
    return c.cwiseAbs2() + ba.cwiseAbs2() * spread;
}

}  // namespace

SensingPlan random_plan(int p, int m, Rng& rng) {
    if (m < 1 || m > p) throw DimensionError("random_plan needs 1 <= m <= p");
    std::vector<int> idx(static_cast<std::size_t>(p));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < m; ++i) {
        std::uniform_int_distribution<int> pick(i, p - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    SensingPlan plan;
    plan.z.assign(idx.begin(), idx.begin() + m);
    std::sort(plan.z.begin(), plan.z.end());
    return plan;
}

Vector draw_anomaly_sample(const SpikeSlabPosterior& post, const ModelConfig& cfg, Rng& rng) {
    const Eigen::Index k = post.mu_a.size();
    Vector theta(k);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double s2 = std::max(post.s2(j), kDrawVarFloor);
        const bool slab = unif(rng) < post.alpha(j);
        const double z = gauss(rng);
        theta(j) = slab ? post.mu_a(j) + std::sqrt(s2) * z : std::sqrt(cfg.v * s2) * z;
    }
    return theta;
}

Vector synthesize_anomaly_signal(const Vector& theta_hat, const BasisDictionary& dict, const ModelConfig& cfg,
                                 Rng& rng) {
    if (theta_hat.size() != dict.k_a()) throw DimensionError("theta_hat length differs from k_a");
    Vector x = dict.b_a() * theta_hat;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += cfg.sigma_e * gauss(rng);
    return x;
}

Vector score_variables(const Vector& x1_hat, const SpikeSlabPosterior& post, const BasisDictionary& dict) {
    if (x1_hat.size() != dict.p()) throw DimensionError("x1_hat length differs from p");
    if (post.mu_a.size() != dict.k_a()) throw DimensionError("posterior dimension differs from k_a");
    const Vector c = dict.b_a() * post.mu_tilde();
    return 2.0 * x1_hat.cwiseProduct(c) - row_penalty(dict.b_a(), post, c);
}

SensingPlan select_top_m(const Vector& scores, int m, Rng& rng) {
    const int p = static_cast<int>(scores.size());
    if (m < 1 || m > p) throw DimensionError("select_top_m needs 1 <= m <= p");
    std::vector<int> idx(static_cast<std::size_t>(p));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores(a) > scores(b); });
    SensingPlan plan;
    plan.z.assign(idx.begin(), idx.begin() + m);
    std::sort(plan.z.begin(), plan.z.end());
    plan.scores = scores;
    return plan;
}

double oracle_objective(const IndexSet& z, const Vector& x1_hat, const SpikeSlabPosterior& post,
                        const BasisDictionary& dict) {
    validate_subset(z, dict.p());
    if (x1_hat.size() != dict.p()) throw DimensionError("x1_hat length differs from p");
    const Matrix baz = gather_rows(dict.b_a(), z);
    Vector xz(static_cast<Eigen::Index>(z.size()));
    for (std::size_t r = 0; r < z.size(); ++r) xz(static_cast<Eigen::Index>(r)) = x1_hat(z[r]);
    const Vector c = baz * post.mu_tilde();
    double value = 2.0 * c.dot(xz) - row_penalty(baz, post, c).sum();
    if (dict.k_b() > 0) {
        const ColumnProjector proj(gather_rows(dict.b_b(), z));
        value += -2.0 * proj.bilinear(c, xz) + proj.quad(c);
    }
    return value;
}

SensingPlan oracle_select(const Vector& x1_hat, const SpikeSlabPosterior& post, const BackgroundPosterior&,
                          const BasisDictionary& dict, const ModelConfig&, int m, Rng& rng) {
    const int p = dict.p();
    if (m < 1 || m > p) throw DimensionError("oracle_select needs 1 <= m <= p");
    if (log_binomial(p, m) > std::log(kMaxOracleSubsets))
        throw CapabilityError("oracle_select would enumerate C(" + std::to_string(p) + ", " + std::to_string(m) +
                              ") subsets, above the limit of 1e6; use select_top_m");
    const Vector scores = score_variables(x1_hat, post, dict);
    const Vector c = dict.b_a() * post.mu_tilde();
    const int kb = dict.k_b();
    const Matrix& bb = dict.b_b();

    // Objective = sum of scores - 2 a' G^+ y + a' G^+ a with G = B_bZ' B_bZ,
    // a = B_bZ' c_Z, y = B_bZ' x_Z, all additive over the rows in Z.
    IndexSet cur, best;
    cur.reserve(static_cast<std::size_t>(m));
    double best_val = -kInf;
    long ties = 0;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Matrix> g_stack(static_cast<std::size_t>(m) + 1, Matrix::Zero(kb, kb));
    std::vector<Vector> a_stack(static_cast<std::size_t>(m) + 1, Vector::Zero(kb));
    std::vector<Vector> y_stack(static_cast<std::size_t>(m) + 1, Vector::Zero(kb));
    std::vector<double> s_stack(static_cast<std::size_t>(m) + 1, 0.0);

    auto leaf = [&]() {
        double v = s_stack[static_cast<std::size_t>(m)];
        if (kb > 0) {
            const Matrix gp = sym_pinv(g_stack[static_cast<std::size_t>(m)]);
            const Vector& a = a_stack[static_cast<std::size_t>(m)];
            const Vector& y = y_stack[static_cast<std::size_t>(m)];
            v += -2.0 * a.dot(gp * y) + a.dot(gp * a);
        }
        const double tol = std::isfinite(best_val) ? 1e-12 * std::max(1.0, std::abs(best_val)) : 0.0;
        if (v > best_val + tol) {
            best_val = v;
            best = cur;
            ties = 1;
        } else if (std::abs(v - best_val) <= tol) {
            ++ties;
            if (unif(rng) * static_cast<double>(ties) < 1.0) best = cur;
        }
    };
    auto dfs = [&](auto&& self, int start, int depth) -> void {
        if (depth == m) {
            leaf();
            return;
        }
        for (int i = start; i <= p - (m - depth); ++i) {
            const std::size_t d = static_cast<std::size_t>(depth);
            s_stack[d + 1] = s_stack[d] + scores(i);
            if (kb > 0) {
                const Vector b = bb.row(i).transpose();
                g_stack[d + 1] = g_stack[d] + b * b.transpose();
                a_stack[d + 1] = a_stack[d] + b * c(i);
                y_stack[d + 1] = y_stack[d] + b * x1_hat(i);
            }
            cur.push_back(i);
            self(self, i + 1, depth + 1);
            cur.pop_back();
        }
    };
    dfs(dfs, 0, 0);
    SensingPlan plan;
    plan.z = best;
    plan.scores = scores;
    return plan;
}

}  // namespace cdssd
