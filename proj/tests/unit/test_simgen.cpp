#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdssd/bases.hpp"
#include "cdssd/errors.hpp"
#include "cdssd/scenario.hpp"
#include "cdssd/simgen.hpp"
#include "helpers.hpp"

using namespace cdssd;
using testutil::max_abs_diff;

namespace {

Scenario small_scenario(long tau = kNoChange) {
    const int p = 15;
    Scenario sc{"test", BasisDictionary(fourier_basis(p, 3), bspline_basis(p, 4, 14, true)), {}, tau, {}, 2000,
                false, 0.0};
    sc.cfg = ModelConfig::uniform(sc.dict.k_a(), 0.05, 0.3, 3.0, 0.1, 1e-7, 0.1, 5);
    return sc;
}

nlohmann::json scenario_doc() {
    return nlohmann::json::parse(R"({
        "name": "unit",
        "p": 15, "m": 5,
        "background_basis": {"type": "fourier", "k": 3},
        "anomaly_basis": {"type": "bspline", "order": 4, "n_knots": 14, "normalize_columns": true},
        "sigma_e": 0.05, "sigma_b": 0.3, "lambda": 0.1, "w": 0.1, "sigma_j": 3.0, "v": 1e-7,
        "tau": 50, "horizon": 300,
        "change": [{"basis": 2, "phi": 0.5}],
        "arl0_target": 200
    })");
}

}  // namespace

TEST_CASE("gen_stream: zero variances give a zero stream") {
    Scenario sc = small_scenario();
    sc.cfg.sigma_b = 0.0;
    sc.cfg.sigma_e = 0.0;
    const Matrix s = gen_stream(sc, 1, 50);
    CHECK(s.rows() == 50);
    CHECK(s.cols() == 15);
    CHECK(s.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gen_stream: null covariance matches the model") {
    const Scenario sc = small_scenario();
    const int n = 5000;
    const Matrix s = gen_stream(sc, 2, n);
    const Vector mean = s.colwise().mean().transpose();
    const Matrix centered = s.rowwise() - mean.transpose();
    const Matrix cov = centered.transpose() * centered / (n - 1.0);
    Matrix expect = 0.09 * sc.dict.b_b() * sc.dict.b_b().transpose();
    expect.diagonal().array() += 0.0025;
    CHECK(max_abs_diff(cov, expect) < 0.05);
    CHECK(mean.cwiseAbs().maxCoeff() < 4.0 * 0.31 / std::sqrt(double(n)));
}

TEST_CASE("gen_stream: post-change mean shift is the change column") {
    Scenario sc = small_scenario(1000);
    sc.horizon = 6000;
    sc.change = {{2, 1.0}};
    const Matrix s = gen_stream(sc, 3, 6000);
    const Vector pre = s.topRows(1000).colwise().mean().transpose();
    const Vector post = s.bottomRows(5000).colwise().mean().transpose();
    const Vector diff = post - pre;
    const Vector col = sc.dict.b_a().col(2);
    // per-coordinate sd of X is at most sqrt(0.09 * max row norm^2 + 0.0025)
    const double sd = std::sqrt(0.09 * sc.dict.b_b().rowwise().squaredNorm().maxCoeff() + 0.0025);
    const double se = sd * std::sqrt(1.0 / 1000 + 1.0 / 5000);
    CHECK(max_abs_diff(diff, col) < 4.0 * se);
}

TEST_CASE("gen_stream: the change starts right after tau") {
    Scenario sc = small_scenario(10);
    sc.change = {{0, 5.0}};
    sc.cfg.sigma_b = 1e-9;
    sc.cfg.sigma_e = 1e-9;
    StreamGenerator gen(sc, 4);
    for (int t = 1; t <= 12; ++t) {
        const Vector x = gen.next();
        CHECK(gen.step() == t);
        if (t <= 10) CHECK(x.norm() < 1e-6);
        else CHECK(max_abs_diff(x, 5.0 * sc.dict.b_a().col(0)) < 1e-6);
    }
}

TEST_CASE("gen_stream: random change basis is drawn per stream") {
    Scenario sc = small_scenario(0);
    sc.change = {{0, 1.0}};
    sc.random_change_basis = true;
    std::vector<int> seen(static_cast<std::size_t>(sc.dict.k_a()), 0);
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        StreamGenerator gen(sc, seed);
        int hits = 0;
        for (int j = 0; j < sc.dict.k_a(); ++j)
            if (gen.theta_a()(j) == 1.0) {
                ++seen[static_cast<std::size_t>(j)];
                ++hits;
            }
        CHECK(hits == 1);
    }
    for (int c : seen) CHECK(std::abs(c / 2000.0 - 1.0 / seen.size()) < 0.03);
}

TEST_CASE("gen_stream: reproducible from the seed") {
    Scenario sc = small_scenario(20);
    sc.change = {{1, 0.5}};
    CHECK(gen_stream(sc, 77, 100) == gen_stream(sc, 77, 100));
    CHECK(gen_stream(sc, 77, 100) != gen_stream(sc, 78, 100));
    CHECK(gen_stream(sc, 5).rows() == 2000);
    // the magnitude does not change the noise draws
    Scenario other = sc;
    other.change = {{1, 0.0}};
    const Matrix a = gen_stream(sc, 9, 60), b = gen_stream(other, 9, 60);
    CHECK(max_abs_diff(a.topRows(20), b.topRows(20)) == 0.0);
    const Vector shift = 0.5 * sc.dict.b_a().col(1);
    for (int t = 20; t < 60; ++t) CHECK(max_abs_diff(a.row(t).transpose() - b.row(t).transpose(), shift) < 1e-12);
}

TEST_CASE("partial_view") {
    Vector x(3);
    x << 10.0, 20.0, 30.0;
    const Vector v = partial_view(x, {0, 2});
    CHECK(v.size() == 2);
    CHECK(v(0) == 10.0);
    CHECK(v(1) == 30.0);
    CHECK(partial_view(x, {0, 1, 2}) == x);
    CHECK_THROWS_AS(partial_view(x, {0, 3}), IndexError);

    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const Vector full = testutil::randn(12, rng);
        IndexSet z;
        for (int i = 0; i < 12; ++i)
            if (rng() % 2) z.push_back(i);
        if (z.empty()) continue;
        const Vector part = partial_view(full, z);
        Vector back = Vector::Constant(12, std::nan(""));
        for (std::size_t r = 0; r < z.size(); ++r) back(z[r]) = part(static_cast<Eigen::Index>(r));
        for (int i : z) CHECK(back(i) == full(i));
    }
}

TEST_CASE("stream CSV round trip") {
    Rng rng(6);
    Matrix rows = testutil::randn(5, 3, rng);
    rows(2, 1) = std::nan("");
    std::stringstream ss;
    write_stream_csv(ss, rows);
    CHECK(ss.str().rfind("t,x1,x2,x3\n1,", 0) == 0);
    const Matrix back = read_stream_csv(ss);
    REQUIRE(back.rows() == 5);
    REQUIRE(back.cols() == 3);
    CHECK(std::isnan(back(2, 1)));
    for (int t = 0; t < 5; ++t)
        for (int i = 0; i < 3; ++i)
            if (!(t == 2 && i == 1)) CHECK(back(t, i) == rows(t, i));
}

TEST_CASE("stream CSV: comments, missing markers and errors") {
    std::istringstream ok("# generated\nt,x1,x2\n1,0.5,NA\n2,,1e-3\n");
    const Matrix m = read_stream_csv(ok);
    CHECK(m.rows() == 2);
    CHECK(std::isnan(m(0, 1)));
    CHECK(std::isnan(m(1, 0)));
    CHECK(m(1, 1) == 1e-3);

    std::istringstream no_header("1,2,3\n");
    CHECK_THROWS_AS(read_stream_csv(no_header), DataError);
    std::istringstream ragged("t,x1,x2\n1,2\n");
    CHECK_THROWS_AS(read_stream_csv(ragged), DataError);
    std::istringstream bad("t,x1\n1,abc\n");
    CHECK_THROWS_AS(read_stream_csv(bad), DataError);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_stream_csv(empty), DataError);
}

TEST_CASE("Scenario::validate") {
    Scenario sc = small_scenario(50);
    sc.change = {{2, 0.5}};
    CHECK_NOTHROW(sc.validate());
    CHECK_FALSE(sc.is_null());

    Scenario bad = sc;
    bad.tau = 2000;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = sc;
    bad.change = {{sc.dict.k_a(), 1.0}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = sc;
    bad.random_change_basis = true;
    bad.change = {{0, 1.0}, {1, 1.0}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = sc;
    bad.horizon = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    Scenario null = sc;
    null.change = {{2, 0.0}};
    CHECK(null.is_null());
    null = sc;
    null.tau = kNoChange;
    CHECK(null.is_null());
}

TEST_CASE("parse_scenario: fields") {
    const ScenarioFile sf = parse_scenario(scenario_doc(), ".");
    const Scenario& sc = sf.scenario;
    CHECK(sc.name == "unit");
    CHECK(sc.dict.p() == 15);
    CHECK(sc.dict.k_b() == 3);
    CHECK(sc.dict.k_a() == 10);
    CHECK(sc.cfg.m == 5);
    CHECK(sc.cfg.sigma_j.size() == 10);
    CHECK(sc.cfg.w(9) == 0.1);
    CHECK(sc.tau == 50);
    CHECK(sc.horizon == 300);
    REQUIRE(sc.change.size() == 1);
    CHECK(sc.change[0].basis_index == 2);
    CHECK(sc.change[0].phi == 0.5);
    CHECK_FALSE(sc.random_change_basis);
    CHECK(sc.arl0_target == 200.0);
    CHECK(sf.engine.sampler == SamplerKind::TopM);
}

TEST_CASE("parse_scenario: rejects bad documents") {
    auto doc = scenario_doc();
    doc["colour"] = "red";
    CHECK_THROWS_AS(parse_scenario(doc, "."), ConfigError);
    doc = scenario_doc();
    doc.erase("sigma_e");
    CHECK_THROWS_AS(parse_scenario(doc, "."), ConfigError);
    doc = scenario_doc();
    doc["w"] = {0.1, 0.2};
    CHECK_THROWS_AS(parse_scenario(doc, "."), ConfigError);
    doc = scenario_doc();
    doc["anomaly_basis"] = {{"type", "wavelet"}};
    CHECK_THROWS_AS(parse_scenario(doc, "."), ConfigError);
    doc = scenario_doc();
    doc["change"] = {{{"basis", "somewhere"}, {"phi", 1.0}}};
    CHECK_THROWS_AS(parse_scenario(doc, "."), ConfigError);
    doc = scenario_doc();
    doc["m"] = 16;
    CHECK_THROWS_AS(parse_scenario(doc, "."), ConfigError);
    doc = scenario_doc();
    doc["p"] = 2.5;
    CHECK_THROWS_AS(parse_scenario(doc, "."), ConfigError);
}

TEST_CASE("with_budget_and_magnitude") {
    const ScenarioFile sf = parse_scenario(scenario_doc(), ".");
    const Scenario s = with_budget_and_magnitude(sf.scenario, 8, 1.0);
    CHECK(s.cfg.m == 8);
    CHECK(s.change[0].phi == 1.0);
    CHECK(sf.scenario.cfg.m == 5);
}

TEST_CASE("bundled scenario files load") {
    const std::filesystem::path dir = std::filesystem::path(CDSSD_SOURCE_DIR) / "scenarios";
    for (const char* name : {"p15.json", "p15_null.json", "line30.json", "image20.json"}) {
        CAPTURE(name);
        const ScenarioFile sf = load_scenario(dir / name);
        CHECK_NOTHROW(sf.scenario.validate());
        CHECK_FALSE(sf.table_m.empty());
    }
}
