#pragma once

// Small dense kernels shared by the Krylov and Nystrom code.

#include "abcg/types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace abcg::linalg {

struct ThinQr {
    Matrix q;  // d x m, orthonormal columns
    Matrix r;  // m x m, upper triangular with nonnegative diagonal
};

/// Householder QR with the sign of R's diagonal fixed to be nonnegative, so
/// the factorization is unique for full-rank input.
inline ThinQr thin_qr(const Matrix& x)
{
    const Index m = x.cols();
    Eigen::HouseholderQR<Matrix> qr(x);
    ThinQr out;
    out.q = qr.householderQ() * Matrix::Identity(x.rows(), m);
    out.r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    for (Index i = 0; i < m; ++i) {
        if (out.r(i, i) < 0.0) {
            out.r.row(i) *= -1.0;
            out.q.col(i) *= -1.0;
        }
    }
    return out;
}

inline double max_column_norm(const Matrix& x)
{
    double best = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
        best = std::max(best, x.col(j).norm());
    }
    return best;
}

inline Vector singular_values(const Matrix& x)
{
    return Eigen::JacobiSVD<Matrix>(x).singularValues();
}

/// Spectral norm of a symmetric matrix.
inline double symmetric_norm(const Matrix& s)
{
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    const Vector& ev = eig.eigenvalues();
    return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

inline Matrix symmetrized(const Matrix& s)
{
    return 0.5 * (s + s.transpose());
}

/// Orthonormal basis for the numerical range of x; columns whose singular
/// value falls below tol are dropped.
inline Matrix range_basis(const Matrix& x, double tol)
{
    Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU);
    const Vector& sv = svd.singularValues();
    Index rank = 0;
    while (rank < sv.size() && sv(rank) > tol) {
        ++rank;
    }
    return svd.matrixU().leftCols(rank);
}

/// Cholesky factorization of a symmetric positive-definite band matrix with
/// half-bandwidth `bw`, stored as L(i, j) = band(i, i - j) for 0 <= i - j <= bw.
class BandedCholesky {
public:
    BandedCholesky() = default;

    /// Factors s + shift * I. Throws NumericalError if a pivot is not positive.
    BandedCholesky(const Matrix& s, Index bw, double shift = 0.0)
        : n_(s.rows()), bw_(bw), band_(Matrix::Zero(s.rows(), bw + 1))
    {
        for (Index j = 0; j < n_; ++j) {
            const Index lo = std::max<Index>(0, j - bw_);
            double diag = s(j, j) + shift;
            for (Index k = lo; k < j; ++k) {
                const double l = at(j, k);
                diag -= l * l;
            }
            if (!(diag > 0.0) || !std::isfinite(diag)) {
                throw NumericalError("banded Cholesky: non-positive pivot at row " + std::to_string(j));
            }
            const double ljj = std::sqrt(diag);
            band_(j, 0) = ljj;
            const Index hi = std::min(n_ - 1, j + bw_);
            for (Index i = j + 1; i <= hi; ++i) {
                double v = s(i, j);
                const Index klo = std::max<Index>(0, i - bw_);
                for (Index k = std::max(lo, klo); k < j; ++k) {
                    v -= at(i, k) * at(j, k);
                }
                band_(i, i - j) = v / ljj;
            }
        }
    }

    Index size() const { return n_; }

    Matrix solve(const Matrix& rhs) const
    {
        Matrix x = rhs;
        for (Index c = 0; c < x.cols(); ++c) {
            for (Index i = 0; i < n_; ++i) {
                double v = x(i, c);
                for (Index k = std::max<Index>(0, i - bw_); k < i; ++k) {
                    v -= at(i, k) * x(k, c);
                }
                x(i, c) = v / band_(i, 0);
            }
            for (Index i = n_ - 1; i >= 0; --i) {
                double v = x(i, c);
                const Index hi = std::min(n_ - 1, i + bw_);
                for (Index k = i + 1; k <= hi; ++k) {
                    v -= at(k, i) * x(k, c);
                }
                x(i, c) = v / band_(i, 0);
            }
        }
        return x;
    }

private:
    double at(Index i, Index j) const { return band_(i, i - j); }

    Index n_ = 0;
    Index bw_ = 0;
    Matrix band_;
};

/// Largest |i - j| over the nonzero entries of s.
inline Index half_bandwidth(const Matrix& s)
{
    Index bw = 0;
    for (Index j = 0; j < s.cols(); ++j) {
        for (Index i = 0; i < s.rows(); ++i) {
            if (s(i, j) != 0.0) {
                bw = std::max(bw, i > j ? i - j : j - i);
            }
        }
    }
    return bw;
}

} // namespace abcg::linalg
