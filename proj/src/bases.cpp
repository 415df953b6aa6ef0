#include "cdssd/bases.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "cdssd/errors.hpp"

namespace cdssd {

namespace {

void check_subset(const IndexSet& z, int p) {
    if (z.empty()) throw DimensionError("index set is empty");
    std::vector<char> seen(static_cast<std::size_t>(p), 0);
    for (int i : z) {
        if (i < 0 || i >= p) throw IndexError("index " + std::to_string(i) + " outside [0, " + std::to_string(p) + ")");
        if (seen[static_cast<std::size_t>(i)]) throw IndexError("duplicate index " + std::to_string(i));
        seen[static_cast<std::size_t>(i)] = 1;
    }
}

Matrix normalized_columns(const Matrix& b) {
    Matrix out = b;
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const double n = out.col(j).norm();
        if (n > 0.0) out.col(j) /= n;
    }
    return out;
}

}  // namespace

BasisDictionary::BasisDictionary(Matrix b_b, Matrix b_a) : b_b_(std::move(b_b)), b_a_(std::move(b_a)) {
    if (b_a_.rows() == 0 || b_a_.cols() == 0) throw DimensionError("anomaly basis is empty");
    if (b_b_.rows() != b_a_.rows())
        throw DimensionError("basis row counts differ: B_b has " + std::to_string(b_b_.rows()) + ", B_a has " +
                             std::to_string(b_a_.rows()));
    if (b_b_.cols() > b_b_.rows()) throw DimensionError("B_b has more columns than rows");
    if (!b_b_.allFinite() || !b_a_.allFinite()) throw DimensionError("basis contains non-finite values");
    for (Eigen::Index j = 0; j < b_a_.cols(); ++j)
        if (b_a_.col(j).cwiseAbs().maxCoeff() == 0.0)
            throw DimensionError("column " + std::to_string(j) + " of B_a is zero");
    if (b_b_.cols() > 0) {
        Eigen::ColPivHouseholderQR<Matrix> qr(b_b_);
        if (qr.rank() < b_b_.cols()) throw DimensionError("B_b does not have full column rank");
    }
}

BasisDictionary BasisDictionary::anomaly_only(Matrix b_a) {
    Matrix empty(b_a.rows(), 0);
    return BasisDictionary(std::move(empty), std::move(b_a));
}

Matrix fourier_basis(int p, int k) {
    if (p < 1 || k < 1) throw DimensionError("fourier_basis needs p >= 1 and k >= 1");
    if (k > p) throw DimensionError("fourier_basis: k = " + std::to_string(k) + " exceeds p = " + std::to_string(p));
    Matrix b(p, k);
    int col = 0;
    for (int f = 1; col < k && 2 * f <= p; ++f) {
        Vector c(p), s(p);
        for (int t = 0; t < p; ++t) {
            const double ang = 2.0 * std::numbers::pi * f * t / p;
            c(t) = std::cos(ang);
            s(t) = std::sin(ang);
        }
        b.col(col++) = c.normalized();
        if (col < k && 2 * f != p) b.col(col++) = s.normalized();
    }
    if (col < k) b.col(col++) = Vector::Constant(p, 1.0 / std::sqrt(static_cast<double>(p)));
    return b;
}

Matrix bspline_basis(int p, int order, int n_knots, bool normalize_columns, KnotSpan span) {
    if (p < 1 || order < 1) throw DimensionError("bspline_basis needs p >= 1 and order >= 1");
    if (n_knots < order + 1)
        throw DimensionError("bspline_basis: " + std::to_string(n_knots) + " knots cannot carry order " +
                             std::to_string(order));
    const int k = n_knots - order;
    std::vector<double> t(static_cast<std::size_t>(n_knots));
    double lo = 0.0, hi = 1.0;
    if (span == KnotSpan::Interior) {
        const int intervals = n_knots - 2 * order + 1;
        if (intervals < 1)
            throw DimensionError("bspline_basis: " + std::to_string(n_knots) + " knots leave no interior span for order " +
                                 std::to_string(order) + " (need at least " + std::to_string(2 * order) + ")");
        for (int i = 0; i < n_knots; ++i) t[static_cast<std::size_t>(i)] = static_cast<double>(i - (order - 1)) / intervals;
        lo = t[static_cast<std::size_t>(order - 1)];
        hi = t[static_cast<std::size_t>(n_knots - order)];
    } else {
        for (int i = 0; i < n_knots; ++i) t[static_cast<std::size_t>(i)] = static_cast<double>(i) / (n_knots - 1);
    }
    // index of the last degree-0 interval that ends at hi; it is closed on the right
    int last = 0;
    for (int i = 0; i + 1 < n_knots; ++i)
        if (t[static_cast<std::size_t>(i + 1)] <= hi + 1e-12) last = i;

    Matrix b = Matrix::Zero(p, k);
    std::vector<double> n(static_cast<std::size_t>(n_knots - 1));
    for (int r = 0; r < p; ++r) {
        const double x = p == 1 ? lo : lo + (hi - lo) * r / (p - 1);
        const bool at_end = x >= t[static_cast<std::size_t>(last + 1)];
        for (int i = 0; i + 1 < n_knots; ++i) {
            const double a = t[static_cast<std::size_t>(i)], c = t[static_cast<std::size_t>(i + 1)];
            n[static_cast<std::size_t>(i)] = (at_end ? i == last : (a <= x && x < c)) ? 1.0 : 0.0;
        }
        for (int d = 2; d <= order; ++d) {
            for (int i = 0; i + d < n_knots; ++i) {
                const std::size_t u = static_cast<std::size_t>(i);
                const double left = (x - t[u]) / (t[u + d - 1] - t[u]);
                const double right = (t[u + d] - x) / (t[u + d] - t[u + 1]);
                n[u] = left * n[u] + right * n[u + 1];
            }
        }
        for (int j = 0; j < k; ++j) b(r, j) = std::max(0.0, n[static_cast<std::size_t>(j)]);
    }
    for (int j = 0; j < k; ++j)
        if (b.col(j).cwiseAbs().maxCoeff() == 0.0)
            throw DimensionError("bspline_basis: column " + std::to_string(j) + " has no support on the grid (p too small)");
    return normalize_columns ? normalized_columns(b) : b;
}

Matrix kron_basis(const Matrix& b1, const Matrix& b2) {
    if (b1.size() == 0 || b2.size() == 0) throw DimensionError("kron_basis: empty input");
    Matrix out(b1.rows() * b2.rows(), b1.cols() * b2.cols());
    for (Eigen::Index i = 0; i < b1.rows(); ++i)
        for (Eigen::Index j = 0; j < b1.cols(); ++j)
            out.block(i * b2.rows(), j * b2.cols(), b2.rows(), b2.cols()) = b1(i, j) * b2;
    return out;
}

PcaResult pca_basis(const Matrix& training, int k) {
    const Eigen::Index p = training.rows(), n = training.cols();
    if (n < 2) throw DimensionError("pca_basis needs at least 2 training samples");
    if (k < 1 || k > std::min(p, n)) throw DimensionError("pca_basis: k must lie in [1, min(p, n_train)]");
    const Vector mean = training.rowwise().mean();
    const Matrix centered = training.colwise() - mean;
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    const double tol = static_cast<double>(std::max(p, n)) * std::numeric_limits<double>::epsilon() * (s.size() ? s(0) : 0.0);
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > tol) ++rank;
    if (k > rank)
        throw DimensionError("pca_basis: k = " + std::to_string(k) + " exceeds the rank " + std::to_string(rank) +
                             " of the centered training data");
    PcaResult res;
    res.basis = svd.matrixU().leftCols(k);
    for (int j = 0; j < k; ++j) {
        Eigen::Index imax = 0;
        res.basis.col(j).cwiseAbs().maxCoeff(&imax);
        if (res.basis(imax, j) < 0.0) res.basis.col(j) *= -1.0;
    }
    res.scores = res.basis.transpose() * centered;
    double tail = 0.0;
    for (Eigen::Index i = k; i < s.size(); ++i) tail += s(i) * s(i);
    const double dof = static_cast<double>(p - k) * static_cast<double>(n - 1);
    res.noise_std = dof > 0.0 ? std::sqrt(tail / dof) : 0.0;
    return res;
}

Matrix identity_anomaly_basis(int p) {
    if (p < 1) throw DimensionError("identity_anomaly_basis needs p >= 1");
    return Matrix::Identity(p, p);
}

OrthogonalityReport check_orthogonality(const BasisDictionary& dict, const IndexSet& z, double epsilon, double delta) {
    check_subset(z, dict.p());
    if (!(epsilon > 0.0 && epsilon <= 1.0) || !(delta > 0.0 && delta <= 1.0))
        throw DimensionError("check_orthogonality: epsilon and delta must lie in (0, 1]");
    OrthogonalityReport rep;
    rep.epsilon = epsilon;
    rep.delta = delta;
    const int p = dict.p();
    const double m = static_cast<double>(z.size());
    rep.a_1 = rep.a_p = m / p;

    const Matrix na = normalized_columns(dict.b_a());
    const Matrix nb = normalized_columns(dict.b_b());
    auto coherence = [p](const Matrix& b) {
        double c = 0.0;
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            const double nn = b.col(j).squaredNorm();
            if (nn > 0.0) c = std::max(c, p * b.col(j).cwiseAbs2().maxCoeff() / nn);
        }
        return c;
    };
    rep.coherence = std::max(coherence(na), coherence(nb));
    rep.coherence_bound_ok = rep.coherence >= 1.0 - 1e-12 && rep.coherence <= p + 1e-12;

    const double kk = static_cast<double>(dict.k_a() + dict.k_b());
    const double logterm = std::log(kk * kk / delta);
    const double c2 = rep.coherence * rep.coherence;
    rep.m_min = c2 * logterm / (2.0 * epsilon * epsilon);
    rep.m_max = 2.0 * rep.a_p * rep.a_p * p * p * epsilon * epsilon / (c2 * logterm);
    rep.m_admissible = rep.m_min <= m && m <= rep.m_max;

    rep.within_band = rep.within_eps = true;
    if (dict.k_b() > 0) {
        rep.max_abs_inner_full = (na.transpose() * nb).cwiseAbs().maxCoeff();
        const Matrix inner = gather_rows(na, z).transpose() * gather_rows(nb, z);
        rep.max_abs_inner_sampled = inner.cwiseAbs().maxCoeff();
        rep.within_band = inner.minCoeff() >= -rep.a_p * epsilon && inner.maxCoeff() <= rep.a_1 * epsilon;
        rep.within_eps = rep.max_abs_inner_sampled <= epsilon;
    }
    return rep;
}

void write_basis_csv(std::ostream& os, const Matrix& b) {
    os << b.rows() << ',' << b.cols() << '\n';
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            if (j) os << ',';
            os << b(i, j);
        }
        os << '\n';
    }
}

Matrix read_basis_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw DimensionError("basis CSV: missing header line");
    long p = 0, k = 0;
    char comma = 0;
    std::istringstream hs(line);
    if (!(hs >> p >> comma >> k) || comma != ',' || p < 1 || k < 0) throw DimensionError("basis CSV: bad header '" + line + "'");
    Matrix b(p, k);
    for (long i = 0; i < p; ++i) {
        if (!std::getline(is, line)) throw DimensionError("basis CSV: expected " + std::to_string(p) + " rows");
        std::istringstream rs(line);
        std::string cell;
        long j = 0;
        while (std::getline(rs, cell, ',')) {
            if (j >= k) throw DimensionError("basis CSV: row " + std::to_string(i) + " has too many values");
            try {
                b(i, j++) = std::stod(cell);
            } catch (const std::exception&) {
                throw DimensionError("basis CSV: bad value '" + cell + "' in row " + std::to_string(i));
            }
        }
        if (j != k) throw DimensionError("basis CSV: row " + std::to_string(i) + " has " + std::to_string(j) + " values");
    }
    return b;
}

}  // namespace cdssd
