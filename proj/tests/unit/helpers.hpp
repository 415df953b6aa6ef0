#pragma once

#include <cmath>
#include <random>

#include "cdssd/common.hpp"

namespace testutil {

inline cdssd::Matrix randn(int rows, int cols, cdssd::Rng& rng, double sd = 1.0) {
    std::normal_distribution<double> g(0.0, sd);
    cdssd::Matrix a(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) a(i, j) = g(rng);
    return a;
}

inline cdssd::Vector randn(int n, cdssd::Rng& rng, double sd = 1.0) { return randn(n, 1, rng, sd).col(0); }

inline cdssd::Vector uniform(int n, cdssd::Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    cdssd::Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = u(rng);
    return v;
}

inline double max_abs_diff(const cdssd::Matrix& a, const cdssd::Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

// log density of N(mean, cov) at x via a direct LDLT solve.
inline double log_normal_pdf(const cdssd::Vector& x, const cdssd::Vector& mean, const cdssd::Matrix& cov) {
    Eigen::LDLT<cdssd::Matrix> ldlt(cov);
    const cdssd::Vector d = x - mean;
    const double quad = d.dot(ldlt.solve(d));
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i) logdet += std::log(ldlt.vectorD()(i));
    return -0.5 * (cov.rows() * std::log(2.0 * M_PI) + logdet + quad);
}

}  // namespace testutil
