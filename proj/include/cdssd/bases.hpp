#pragma once

#include <iosfwd>

#include "cdssd/common.hpp"

namespace cdssd {

/// Normal basis B_b (p x k_b) and anomaly basis B_a (p x k_a).
///
/// k_b may be 0, meaning the stream has no background component.
class BasisDictionary {
public:
    /// Validates: equal row counts, B_b full column rank, no zero column in B_a.
    BasisDictionary(Matrix b_b, Matrix b_a);

    /// Dictionary without a background component.
    static BasisDictionary anomaly_only(Matrix b_a);

    const Matrix& b_b() const { return b_b_; }
    const Matrix& b_a() const { return b_a_; }
    int p() const { return static_cast<int>(b_a_.rows()); }
    int k_b() const { return static_cast<int>(b_b_.cols()); }
    int k_a() const { return static_cast<int>(b_a_.cols()); }

private:
    Matrix b_b_;
    Matrix b_a_;
};

/// Where the uniform knot vector sits relative to the [0,1] evaluation grid.
enum class KnotSpan {
    /// Knots are placed so that [0,1] is the region where the splines
    /// sum to one; every grid row is a partition of unity.
    Interior,
    /// Knots span [0,1] end to end; rows near the ends lose mass and the
    /// end rows are zero for order >= 2.
    Full,
};

/// Lowest-frequency Fourier modes on p points, unit-norm columns.
///
/// Column order is cos f1, sin f1, cos f2, sin f2, ... with f = 1, 2, ...
/// A sine that vanishes identically (f = p/2) is skipped. When all p - 1
/// non-constant modes are exhausted the constant column is appended, so
/// k = p gives a complete orthonormal basis.
Matrix fourier_basis(int p, int k);

/// Uniform-knot B-spline basis evaluated at p equally spaced points on [0,1].
///
/// Returns k = n_knots - order columns. Columns are raw (partition of unity)
/// unless normalize_columns is set.
Matrix bspline_basis(int p, int order, int n_knots, bool normalize_columns = false,
                     KnotSpan span = KnotSpan::Interior);

/// Kronecker product: entry (i1*p2+i2, j1*k2+j2) = b1(i1,j1) * b2(i2,j2).
Matrix kron_basis(const Matrix& b1, const Matrix& b2);

struct PcaResult {
    Matrix basis;      ///< p x k principal directions
    Matrix scores;     ///< k x n_train projections of the centered data
    double noise_std;  ///< residual standard deviation after k components
};

/// PCA of a p x n_train training matrix (one sample per column).
///
/// The mean sample is subtracted first. noise_std pools the discarded
/// singular values over (p - k)(n_train - 1) degrees of freedom.
PcaResult pca_basis(const Matrix& training, int k);

Matrix identity_anomaly_basis(int p);

struct OrthogonalityReport {
    double max_abs_inner_full = 0.0;     ///< max |b_ai' b_bj| over all rows
    double max_abs_inner_sampled = 0.0;  ///< same, restricted to Z
    double epsilon = 0.0;
    double delta = 0.0;
    double coherence = 0.0;              ///< max per-column p * max(b^2) / ||b||^2
    bool coherence_bound_ok = false;     ///< 1 <= coherence <= p
    double a_1 = 0.0;                    ///< largest inclusion probability (m/p)
    double a_p = 0.0;                    ///< smallest inclusion probability (m/p)
    double m_min = 0.0;                  ///< admissible m range of the concentration bound
    double m_max = 0.0;
    bool m_admissible = false;
    bool within_band = false;            ///< every pair in [-a_p eps, a_1 eps] on Z
    bool within_eps = false;             ///< every pair has |inner| <= eps on Z
};

/// Cross-orthogonality diagnostics between B_a and B_b, on unit-normalized columns.
OrthogonalityReport check_orthogonality(const BasisDictionary& dict, const IndexSet& z,
                                        double epsilon, double delta);

/// Dense CSV: first line "p,k", then p rows of k values with 17 significant digits.
void write_basis_csv(std::ostream& os, const Matrix& b);
Matrix read_basis_csv(std::istream& is);

}  // namespace cdssd
