#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "cdssd/bases.hpp"
#include "cdssd/detection.hpp"
#include "cdssd/errors.hpp"
#include "cdssd/sampling.hpp"
#include "helpers.hpp"

using namespace cdssd;
using testutil::log_normal_pdf;
using testutil::max_abs_diff;

namespace {

struct Instance {
    BasisDictionary dict;
    ModelConfig cfg;
    IndexSet z;
    Vector x;
    SpikeSlabPosterior post;
    BackgroundPosterior bg;

    DetectionInputs inputs() const { return {x, z, post, bg}; }
};

// Random instance with p = m + 2 rows observed on the first m.
Instance random_instance(Rng& rng, int m, int ka, int kb, double mu_scale = 1.0) {
    const int p = m + 2;
    const Matrix b_a = testutil::randn(p, ka, rng, 0.5);
    BasisDictionary dict = kb > 0 ? BasisDictionary(testutil::randn(p, kb, rng, 0.5), b_a) : BasisDictionary::anomaly_only(b_a);
    ModelConfig cfg = ModelConfig::uniform(ka, 0.3, 0.5, 1.5, 0.3, 0.05, 0.1, m);
    IndexSet z(static_cast<std::size_t>(m));
    std::iota(z.begin(), z.end(), 0);
    SpikeSlabPosterior post;
    post.mu_a = testutil::randn(ka, rng, mu_scale);
    post.s2 = testutil::uniform(ka, rng, 0.05, 0.5);
    post.alpha = testutil::uniform(ka, rng, 0.05, 0.95);
    Vector x = testutil::randn(m, rng);
    BackgroundPosterior bg = update_background(x, z, post, dict, cfg);
    return {std::move(dict), std::move(cfg), std::move(z), std::move(x), std::move(post), std::move(bg)};
}

// H0 marginal as one Gaussian: x ~ N(B_b theta0, se2 I + B_b S B_b').
double h0_gaussian(const Instance& in) {
    const int m = static_cast<int>(in.z.size());
    const double se2 = in.cfg.sigma_e * in.cfg.sigma_e;
    Matrix cov = se2 * Matrix::Identity(m, m);
    Vector mean = Vector::Zero(m);
    if (in.dict.k_b() > 0) {
        const Matrix bz = gather_rows(in.dict.b_b(), in.z);
        mean = bz * background_mean_h0(in.x, in.z, in.dict, in.cfg);
        cov += bz * in.bg.cov_b * bz.transpose();
    }
    return log_normal_pdf(in.x, mean, cov);
}

// H1 marginal as a 2^k_a Gaussian mixture.
double h1_mixture(const Instance& in) {
    const int m = static_cast<int>(in.z.size()), ka = in.dict.k_a();
    const double se2 = in.cfg.sigma_e * in.cfg.sigma_e;
    const Matrix az = gather_rows(in.dict.b_a(), in.z);
    std::vector<double> terms;
    for (int bits = 0; bits < (1 << ka); ++bits) {
        Vector mu = Vector::Zero(ka), k(ka);
        double lp = 0.0;
        for (int j = 0; j < ka; ++j) {
            const bool on = (bits >> j) & 1;
            lp += std::log(on ? in.post.alpha(j) : 1.0 - in.post.alpha(j));
            mu(j) = on ? in.post.mu_a(j) : 0.0;
            k(j) = (on ? 1.0 : in.cfg.v) * in.post.s2(j);
        }
        Matrix cov = se2 * Matrix::Identity(m, m) + az * k.asDiagonal() * az.transpose();
        Vector mean = az * mu;
        if (in.dict.k_b() > 0) {
            const Matrix bz = gather_rows(in.dict.b_b(), in.z);
            mean += bz * in.bg.theta_n;
            cov += bz * in.bg.cov_b * bz.transpose();
        }
        terms.push_back(lp + log_normal_pdf(in.x, mean, cov));
    }
    const double mx = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    return mx + std::log(s);
}

}  // namespace

TEST_CASE("lambda_stat: zero anomaly mean gives exactly zero") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        Instance in = random_instance(rng, 3 + trial % 4, 1 + trial % 3, trial % 3);
        in.post.mu_a.setZero();
        CHECK(lambda_stat(in.inputs(), in.dict, in.cfg) == 0.0);
    }
}

TEST_CASE("lambda_stat: hard inclusion without background") {
    Rng rng(2);
    Instance in = random_instance(rng, 5, 3, 0);
    in.post.alpha.setOnes();
    const Matrix az = gather_rows(in.dict.b_a(), in.z);
    const Vector& mu = in.post.mu_a;
    const double expect = 2.0 * mu.dot(az.transpose() * in.x) - mu.dot(az.transpose() * az * mu);
    CHECK(lambda_stat(in.inputs(), in.dict, in.cfg) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("lambda_stat: literal formula with the hat matrix") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Instance in = random_instance(rng, 6, 3, 2);
        const Matrix az = gather_rows(in.dict.b_a(), in.z), bz = gather_rows(in.dict.b_b(), in.z);
        const Matrix hat = bz * (bz.transpose() * bz).inverse() * bz.transpose();
        const Vector mt = in.post.mu_tilde();
        Matrix abar = in.post.alpha * in.post.alpha.transpose();
        abar.diagonal() = in.post.alpha;
        const Matrix ident = Matrix::Identity(6, 6);
        const double expect = 2.0 * mt.dot(az.transpose() * (ident - hat) * (in.x - bz * in.bg.theta_n)) -
                              in.post.mu_a.dot((az.transpose() * az).cwiseProduct(abar) * in.post.mu_a) +
                              mt.dot(az.transpose() * hat * az * mt);
        CHECK(lambda_stat(in.inputs(), in.dict, in.cfg) == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("lambda_stat: column permutation invariance") {
    Rng rng(4);
    const Instance in = random_instance(rng, 5, 4, 1);
    const std::vector<int> perm{2, 0, 3, 1};
    Matrix pa(in.dict.p(), 4);
    SpikeSlabPosterior pq = in.post;
    for (int j = 0; j < 4; ++j) {
        pa.col(j) = in.dict.b_a().col(perm[j]);
        pq.mu_a(j) = in.post.mu_a(perm[j]);
        pq.s2(j) = in.post.s2(perm[j]);
        pq.alpha(j) = in.post.alpha(perm[j]);
    }
    const BasisDictionary pd(in.dict.b_b(), pa);
    const DetectionInputs pin{in.x, in.z, pq, in.bg};
    CHECK(lambda_stat(pin, pd, in.cfg) == doctest::Approx(lambda_stat(in.inputs(), in.dict, in.cfg)).epsilon(1e-12));
    CHECK(log_pbf_exact(pin, pd, in.cfg) == doctest::Approx(log_pbf_exact(in.inputs(), in.dict, in.cfg)).epsilon(1e-9));
}

TEST_CASE("lambda_stat: without background it is the sum of per-variable scores over Z") {
    Rng rng(5);
    const int p = 9;
    const Matrix b_a = testutil::randn(p, 3, rng);
    const auto dict = BasisDictionary::anomaly_only(b_a);
    const auto cfg = ModelConfig::uniform(3, 0.2, 0.3, 1.0, 0.2, 1e-3, 0.1, 4);
    SpikeSlabPosterior q;
    q.mu_a = testutil::randn(3, rng);
    q.s2 = Vector::Constant(3, 0.1);
    q.alpha = testutil::uniform(3, rng, 0.1, 0.9);
    const Vector x = testutil::randn(p, rng);
    const Vector scores = score_variables(x, q, dict);
    const IndexSet z{1, 4, 5, 8};
    Vector xz(4);
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) {
        xz(i) = x(z[i]);
        sum += scores(z[i]);
    }
    const BackgroundPosterior bg{Vector(0), Matrix(0, 0)};
    CHECK(lambda_stat({xz, z, q, bg}, dict, cfg) == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("marginal_h0: closed-form Gaussian") {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const Instance in = random_instance(rng, 4, 2, 2);
        CHECK(marginal_h0(in.inputs(), in.dict, in.cfg) == doctest::Approx(h0_gaussian(in)).epsilon(1e-10));
    }
    const Instance none = random_instance(rng, 4, 2, 0);
    CHECK(marginal_h0(none.inputs(), none.dict, none.cfg) == doctest::Approx(h0_gaussian(none)).epsilon(1e-12));
}

TEST_CASE("marginal_h0: zero data gives the normalizing constant") {
    Rng rng(7);
    Instance in = random_instance(rng, 4, 2, 2);
    in.x.setZero();
    in.bg = update_background(in.x, in.z, [&] {
        auto q = in.post;
        q.mu_a.setZero();
        return q;
    }(), in.dict, in.cfg);
    CHECK(in.bg.theta_n.norm() == 0.0);
    const Matrix bz = gather_rows(in.dict.b_b(), in.z);
    const double se2 = in.cfg.sigma_e * in.cfg.sigma_e;
    const Matrix h = bz.transpose() * bz / se2 + in.bg.cov_b.inverse();
    const double log_c1 = -0.5 * (4 * std::log(2 * M_PI) + std::log(in.bg.cov_b.determinant()) + 4 * std::log(se2) +
                                  std::log(h.determinant()));
    CHECK(marginal_h0(in.inputs(), in.dict, in.cfg) == doctest::Approx(log_c1).epsilon(1e-12));
}

TEST_CASE("marginal_h1_exact: Gaussian mixture over inclusion patterns") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const Instance in = random_instance(rng, 5, 1 + trial % 4, trial % 3);
        CHECK(marginal_h1_exact(in.inputs(), in.dict, in.cfg) == doctest::Approx(h1_mixture(in)).epsilon(1e-9));
    }
}

TEST_CASE("marginal_h1_exact: single always-on basis") {
    Rng rng(9);
    Instance in = random_instance(rng, 4, 1, 2);
    in.post.alpha(0) = 1.0 - 1e-15;
    const Matrix az = gather_rows(in.dict.b_a(), in.z), bz = gather_rows(in.dict.b_b(), in.z);
    const double se2 = in.cfg.sigma_e * in.cfg.sigma_e;
    const Matrix cov = se2 * Matrix::Identity(4, 4) + in.post.s2(0) * az * az.transpose() +
                       bz * in.bg.cov_b * bz.transpose();
    const Vector mean = az * in.post.mu_a + bz * in.bg.theta_n;
    CHECK(marginal_h1_exact(in.inputs(), in.dict, in.cfg) ==
          doctest::Approx(log_normal_pdf(in.x, mean, cov)).epsilon(1e-8));
}

TEST_CASE("log_pbf_exact: equals the difference of marginals") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const Instance in = random_instance(rng, 3 + trial % 3, 2, trial % 3);
        const double d = marginal_h1_exact(in.inputs(), in.dict, in.cfg) - marginal_h0(in.inputs(), in.dict, in.cfg);
        CHECK(std::abs(log_pbf_exact(in.inputs(), in.dict, in.cfg) - d) < 1e-9);
    }
}

TEST_CASE("log_pbf_exact: hypotheses coincide when every slab is off") {
    Rng rng(11);
    Instance in = random_instance(rng, 5, 3, 2);
    in.post.alpha.setConstant(1e-300);
    in.post.mu_a.setZero();
    in.bg = update_background(in.x, in.z, in.post, in.dict, in.cfg);
    double prev = kInf;
    for (double v : {1e-2, 1e-4, 1e-6, 1e-8}) {
        in.cfg.v = v;
        const double lp = std::abs(log_pbf_exact(in.inputs(), in.dict, in.cfg));
        CHECK(lp <= prev);
        prev = lp;
    }
    CHECK(prev < 1e-5);
}

TEST_CASE("log_pbf_exact: small on pure-noise draws under the prior") {
    Rng rng(12);
    const int p = 15, m = 5;
    const BasisDictionary dict(fourier_basis(p, 3), bspline_basis(p, 4, 10, true));
    const int ka = dict.k_a();
    const auto cfg = ModelConfig::uniform(ka, 0.05, 0.3, 3.0, 0.1, 1e-7, 0.1, m);
    SpikeSlabPosterior q = SpikeSlabPosterior::prior(cfg);
    q.s2 = Vector::Constant(ka, 1e-4);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const SensingPlan plan = random_plan(p, m, rng);
        const Vector x = testutil::randn(m, rng, 0.05);
        const auto bg = update_background(x, plan.z, q, dict, cfg);
        worst = std::max(worst, std::abs(log_pbf_exact({x, plan.z, q, bg}, dict, cfg)));
    }
    CHECK(worst < 0.05);
}

TEST_CASE("log_pbf_exact: refuses large k_a") {
    Rng rng(13);
    const Instance in = random_instance(rng, 3, 21, 0);
    CHECK_THROWS_AS(log_pbf_exact(in.inputs(), in.dict, in.cfg), CapabilityError);
    CHECK_THROWS_AS(marginal_h1_exact(in.inputs(), in.dict, in.cfg), CapabilityError);
    CHECK_NOTHROW(lambda_stat(in.inputs(), in.dict, in.cfg));
}

TEST_CASE("lambda_stat tracks the exact statistic near the null") {
    // With a concentrated, fully included posterior the leading term of
    // 2 se2 (log PBF(mu) - log PBF(0)) is Lambda.
    Rng rng(14);
    std::vector<double> xs, ys;
    for (int trial = 0; trial < 100; ++trial) {
        Instance in = random_instance(rng, 6, 1 + trial % 6, 2, 0.05);
        in.post.alpha.setConstant(1.0 - 1e-12);
        in.post.s2.setConstant(1e-6);
        in.bg = update_background(in.x, in.z, in.post, in.dict, in.cfg);
        const double se2 = in.cfg.sigma_e * in.cfg.sigma_e;
        const double lam = lambda_stat(in.inputs(), in.dict, in.cfg);
        const double l1 = log_pbf_exact(in.inputs(), in.dict, in.cfg);
        Instance base = in;
        base.post.mu_a.setZero();
        base.bg = update_background(base.x, base.z, base.post, base.dict, base.cfg);
        const double l0 = log_pbf_exact(base.inputs(), base.dict, base.cfg);
        xs.push_back(lam);
        ys.push_back(2.0 * se2 * (l1 - l0));
    }
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / 100.0;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / 100.0;
    double sxy = 0.0, sxx = 0.0;
    for (int i = 0; i < 100; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    const double slope = sxy / sxx;
    MESSAGE("slope " << slope);
    CHECK(slope >= 0.9);
    CHECK(slope <= 1.1);
}

TEST_CASE("alarm_check: strict exceedance") {
    CHECK_FALSE(alarm_check(0.5, kInf));
    CHECK(alarm_check(1.0 + 1e-12, 1.0));
    CHECK_FALSE(alarm_check(1.0, 1.0));
    CHECK(alarm_check(-5.0, -1e9));
}

TEST_CASE("detection inputs are checked") {
    Rng rng(15);
    const Instance in = random_instance(rng, 4, 2, 1);
    const Vector short_x = in.x.head(3);
    CHECK_THROWS_AS(lambda_stat({short_x, in.z, in.post, in.bg}, in.dict, in.cfg), DimensionError);
    const BackgroundPosterior wrong{Vector::Zero(2), Matrix::Identity(2, 2)};
    CHECK_THROWS_AS(marginal_h0({in.x, in.z, in.post, wrong}, in.dict, in.cfg), DimensionError);
}
