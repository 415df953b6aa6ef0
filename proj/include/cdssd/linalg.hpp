#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "cdssd/common.hpp"
#include "cdssd/errors.hpp"

namespace cdssd {

/// Orthogonal projector onto the column space of a matrix.
///
/// Uses an orthonormal basis from a rank-revealing SVD, so a rank-deficient
/// (or empty) matrix projects onto its actual range.
class ColumnProjector {
public:
    explicit ColumnProjector(const Matrix& a) : rows_(a.rows()) {
        if (a.cols() == 0 || a.rows() == 0) {
            q_.resize(a.rows(), 0);
            return;
        }
        Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
        const Vector& s = svd.singularValues();
        const double tol = std::max<double>(a.rows(), a.cols()) * s(0) *
                           std::numeric_limits<double>::epsilon();
        Eigen::Index r = 0;
        while (r < s.size() && s(r) > tol) ++r;
        q_ = svd.matrixU().leftCols(r);
    }

    Eigen::Index rank() const { return q_.cols(); }

    /// H y.
    Vector apply(const Vector& y) const {
        if (q_.cols() == 0) return Vector::Zero(rows_);
        return q_ * (q_.transpose() * y);
    }

    /// y' H y.
    double quad(const Vector& y) const {
        if (q_.cols() == 0) return 0.0;
        return (q_.transpose() * y).squaredNorm();
    }

    /// x' H y.
    double bilinear(const Vector& x, const Vector& y) const {
        if (q_.cols() == 0) return 0.0;
        return (q_.transpose() * x).dot(q_.transpose() * y);
    }

private:
    Eigen::Index rows_;
    Matrix q_;
};

/// Cholesky factor of an SPD matrix; throws NumericalError otherwise.
inline Eigen::LLT<Matrix> spd_factor(const Matrix& a, const char* what) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": matrix is not positive definite");
    return llt;
}

/// log|A| from a Cholesky factorization.
inline double log_det(const Eigen::LLT<Matrix>& llt) {
    const Matrix& l = llt.matrixLLT();
    double s = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
    return 2.0 * s;
}

/// Moore-Penrose inverse of a small symmetric PSD matrix.
inline Matrix sym_pinv(const Matrix& g) {
    if (g.rows() == 0) return g;
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    const Vector& ev = es.eigenvalues();
    const double tol = g.rows() * std::max(ev.cwiseAbs().maxCoeff(), 0.0) *
                       std::numeric_limits<double>::epsilon() * 16.0;
    Vector inv = Vector::Zero(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev(i) > tol) inv(i) = 1.0 / ev(i);
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace cdssd
