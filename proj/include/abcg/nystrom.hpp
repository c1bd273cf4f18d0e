#pragma once

// Block-Krylov Nystrom approximation and the deflation preconditioner
//
//   P_mu^{-1} = (theta + mu) U (D + mu)^{-1} U^T + (I - U U^T)
//   P_mu      = U (D + mu) U^T / (theta + mu) + (I - U U^T)
//
// plus the condition-number and effective-dimension diagnostics.

#include "abcg/linalg.hpp"
#include "abcg/matgen.hpp"
#include "abcg/operator.hpp"
#include "abcg/solvers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace abcg {

/// U diag(D) U^T with orthonormal U and D nonincreasing, nonnegative.
struct NystromApproximation {
    Matrix u;
    Vector d;
    Index depth = 0;   // s
    Index width = 0;   // l
    Index truncated = 0;  // eigenvalues dropped below the 1e-12 relative floor

    Index rank() const { return d.size(); }
    Matrix dense() const { return linalg::symmetrized(u * d.asDiagonal() * u.transpose()); }
};

/// A<K_s> for K_s = [Omega, A Omega, ..., A^{s-1} Omega].
///
/// An orthonormal basis W of K_s is grown block by block; the products A W_j
/// that extend it are kept, so Y = A W costs one more load (s in total).
/// The Nystrom factor then comes from a shifted Cholesky of W^T Y.
inline NystromApproximation nystrom_block_krylov(const SymmetricOperator& op, const Matrix& omega, Index s)
{
    const Index d = op.dim();
    const Index l = omega.cols();
    if (omega.rows() != d || l < 1) {
        throw DimensionError("nystrom: sketch is " + shape_string(omega.rows(), l) + " for dimension " + std::to_string(d));
    }
    if (s < 1 || s * l > d) {
        throw DimensionError("nystrom: need s >= 1 and s*l <= d (s=" + std::to_string(s) + ", l=" + std::to_string(l) +
                             ", d=" + std::to_string(d) + ")");
    }
    if (!omega.allFinite() || omega.norm() == 0.0) {
        throw DimensionError("nystrom: sketch must be finite and nonzero");
    }

    std::vector<Matrix> basis{linalg::range_basis(omega, 1e-12 * linalg::max_column_norm(omega))};
    std::vector<Matrix> products;
    Index cols = basis.front().cols();
    for (Index j = 0; j < s; ++j) {
        products.push_back(op.apply_block(basis.back()));
        if (j + 1 == s) {
            break;
        }
        Matrix w(d, cols);
        Index c0 = 0;
        for (const auto& b : basis) {
            w.middleCols(c0, b.cols()) = b;
            c0 += b.cols();
        }
        Matrix z = products.back();
        const double scale = linalg::max_column_norm(z);
        for (int pass = 0; pass < 2; ++pass) {
            z.noalias() -= w * (w.transpose() * z);
        }
        Matrix next = scale > 0.0 ? linalg::range_basis(z, 1e-10 * scale) : Matrix(d, 0);
        if (next.cols() == 0) {
            break;  // K_s is already invariant
        }
        // One more pass against the thin basis keeps W orthonormal to working precision.
        next -= w * (w.transpose() * next);
        next = linalg::thin_qr(next).q;
        cols += next.cols();
        basis.push_back(std::move(next));
    }

    Matrix w(d, cols);
    Matrix y(d, cols);
    Index c0 = 0;
    for (std::size_t j = 0; j < products.size(); ++j) {
        w.middleCols(c0, basis[j].cols()) = basis[j];
        y.middleCols(c0, basis[j].cols()) = products[j];
        c0 += basis[j].cols();
    }
    if (!(y.norm() > 0.0)) {
        throw NumericalError("nystrom: sketch lies in the null space of A");
    }

    const Matrix c = linalg::symmetrized(w.transpose() * y);
    double nu = std::numeric_limits<double>::epsilon() * std::max(c.trace(), std::numeric_limits<double>::min());
    std::optional<Eigen::LLT<Matrix>> chol;
    for (int attempt = 0; attempt < 8; ++attempt, nu *= 10.0) {
        Eigen::LLT<Matrix> llt(c + nu * Matrix::Identity(cols, cols));
        if (llt.info() == Eigen::Success) {
            chol.emplace(std::move(llt));
            break;
        }
    }
    if (!chol) {
        throw NumericalError("nystrom: shifted core matrix W^T A W is not positive definite");
    }
    const Matrix y_nu = y + nu * w;
    // F = Y_nu L^{-T}, so F F^T = Y_nu C_nu^{-1} Y_nu^T.
    const Matrix f = chol->matrixL().solve(y_nu.transpose()).transpose();
    Eigen::JacobiSVD<Matrix> svd(f, Eigen::ComputeThinU);
    const Vector sigma = svd.singularValues();

    Vector lam = (sigma.array().square() - nu).max(0.0).matrix();
    const double top = lam.size() > 0 ? lam(0) : 0.0;
    Index keep = 0;
    while (keep < lam.size() && lam(keep) > 0.0 && lam(keep) >= 1e-12 * top) {
        ++keep;
    }

    NystromApproximation out;
    out.u = svd.matrixU().leftCols(keep);
    out.d = lam.head(keep);
    out.depth = s;
    out.width = l;
    out.truncated = lam.size() - keep;
    return out;
}

/// Top-r eigenpairs of A from the oracle, as an approximation of rank r.
inline NystromApproximation exact_deflation(const SpectralOracle& oracle, Index r)
{
    if (r < 0 || r > oracle.dim()) {
        throw DimensionError("exact_deflation: rank " + std::to_string(r) + " outside [0, " + std::to_string(oracle.dim()) + "]");
    }
    NystromApproximation out;
    out.u = oracle.top_eigenvectors(r);
    out.d = oracle.top_eigenvalues(r);
    return out;
}

/// theta rule: a positive value, or Auto for the smallest retained D entry.
struct Theta {
    std::optional<double> value;

    static Theta automatic() { return {}; }
    static Theta fixed(double v) { return {v}; }
};

class DeflationPreconditioner final : public Preconditioner {
public:
    /// An empty U gives the identity preconditioner.
    DeflationPreconditioner(Matrix u, Vector d, double theta) : u_(std::move(u)), d_(std::move(d)), theta_(theta)
    {
        if (u_.cols() != d_.size()) {
            throw DimensionError("deflation preconditioner: U has " + std::to_string(u_.cols()) + " columns but D has " +
                                 std::to_string(d_.size()) + " entries");
        }
        if (!(theta_ > 0.0) || !std::isfinite(theta_)) {
            throw DimensionError("deflation preconditioner: theta must be positive and finite");
        }
        if ((d_.array() < 0.0).any()) {
            throw DimensionError("deflation preconditioner: D must be nonnegative");
        }
    }

    const Matrix& u() const { return u_; }
    const Vector& d() const { return d_; }
    double theta() const { return theta_; }
    Index rank() const { return d_.size(); }

    Matrix apply_inverse(double mu, const Matrix& v) const override
    {
        check(mu, v);
        if (rank() == 0) {
            return v;
        }
        const Matrix c = u_.transpose() * v;
        const Vector w = (theta_ + mu) / (d_.array() + mu);
        return v + u_ * ((c.array().colwise() * (w.array() - 1.0)).matrix());
    }

    Matrix apply(double mu, const Matrix& v) const
    {
        check(mu, v);
        if (rank() == 0) {
            return v;
        }
        const Matrix c = u_.transpose() * v;
        const Vector w = (d_.array() + mu) / (theta_ + mu);
        return v + u_ * ((c.array().colwise() * (w.array() - 1.0)).matrix());
    }

    std::string descriptor() const override
    {
        return "deflation(r=" + std::to_string(rank()) + ", theta=" + std::to_string(theta_) + ")";
    }

private:
    void check(double mu, const Matrix& v) const
    {
        if (!(mu >= 0.0) || !std::isfinite(mu)) {
            throw DimensionError("preconditioner: shift must be finite and nonnegative");
        }
        if (v.rows() != u_.rows() && u_.cols() > 0) {
            throw DimensionError("preconditioner: input has " + std::to_string(v.rows()) + " rows, expected " +
                                 std::to_string(u_.rows()));
        }
    }

    Matrix u_;
    Vector d_;
    double theta_;
};

inline DeflationPreconditioner make_deflation_preconditioner(const NystromApproximation& approx, Theta theta = Theta::automatic())
{
    if (approx.rank() == 0) {
        throw NumericalError("deflation preconditioner: every eigenvalue was truncated; use plain CG");
    }
    const double th = theta.value.value_or(approx.d(approx.rank() - 1));
    return DeflationPreconditioner(approx.u, approx.d, th);
}

/// P_mu = A_mu itself, from the oracle. Perfect preconditioning, for tests.
class OraclePreconditioner final : public Preconditioner {
public:
    explicit OraclePreconditioner(const SpectralOracle& oracle) : oracle_(oracle) {}
    Matrix apply_inverse(double mu, const Matrix& v) const override { return oracle_.solve(v, mu); }
    std::string descriptor() const override { return "oracle"; }

private:
    const SpectralOracle& oracle_;
};

/// Dense P_mu^{-1}, assembled column by column.
inline Matrix dense_inverse(const Preconditioner& p, double mu, Index d)
{
    return linalg::symmetrized(p.apply_inverse(mu, Matrix::Identity(d, d)));
}

/// Eigenvalues (ascending) of P^{-1/2} A_mu P^{-1/2}, via P^{-1} = L L^T and
/// the similar matrix L^T A_mu L.
inline Vector preconditioned_spectrum(const Matrix& a, const Preconditioner& p, double mu)
{
    const Index d = a.rows();
    const Matrix pinv = dense_inverse(p, mu, d);
    Eigen::LLT<Matrix> llt(pinv);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("preconditioner is not positive definite");
    }
    const Matrix l = llt.matrixL();
    Matrix amu = a;
    amu.diagonal().array() += mu;
    const Matrix m = linalg::symmetrized(l.transpose() * amu * l);
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline double precond_condition_number(const Matrix& a, const Preconditioner& p, double mu)
{
    const Vector ev = preconditioned_spectrum(a, p, mu);
    if (!(ev(0) > 0.0)) {
        throw NumericalError("preconditioned operator is not positive definite");
    }
    return ev(ev.size() - 1) / ev(0);
}

/// (theta + mu + ||E||) (1/(theta + mu) + 1/(lambda_d + mu)).
inline double condno_upper_bound(double theta, double mu, double e_norm, double lambda_d)
{
    return (theta + mu + e_norm) * (1.0 / (theta + mu) + 1.0 / (lambda_d + mu));
}

/// d_eff(mu) = sum lambda_i / (lambda_i + mu).
inline double effective_dimension(const Vector& eigs, double mu)
{
    if (!(mu >= 0.0)) {
        throw DimensionError("effective_dimension: shift must be nonnegative");
    }
    double sum = 0.0;
    for (Index i = 0; i < eigs.size(); ++i) {
        sum += eigs(i) > 0.0 ? eigs(i) / (eigs(i) + mu) : 0.0;
    }
    return sum;
}

/// Checks r > 2 d_eff(mu) => lambda_{r+1} <= mu for every admissible r
/// (eigs nonincreasing).
inline bool effective_dimension_tail_holds(const Vector& eigs, double mu)
{
    const double bound = 2.0 * effective_dimension(eigs, mu);
    for (Index r = 0; r + 1 <= eigs.size(); ++r) {
        if (static_cast<double>(r) > bound && eigs(r) > mu) {
            return false;
        }
    }
    return true;
}

struct PrecondDiagnostics {
    double mu = 0.0;
    double kappa_actual = 0.0;
    double kappa_bound = 0.0;     // Prop. 4.1 value with the exact ||E||_2
    double kappa_deflated = 0.0;  // kappa_{r+1}(mu)
    double d_eff = 0.0;
};

/// ||A - U D U^T||_2 from dense data.
inline double approximation_error(const Matrix& a, const NystromApproximation& approx)
{
    return linalg::symmetric_norm(a - approx.dense());
}

/// Diagnostics of a deflation preconditioner on a dense problem; r indexes
/// kappa_{r+1}.
inline std::vector<PrecondDiagnostics> diagnose(const TestProblem& problem, const NystromApproximation& approx,
                                                const DeflationPreconditioner& p, Index r, const ShiftGrid& grid)
{
    const Matrix& a = *problem.a;
    const double e_norm = approximation_error(a, approx);
    std::vector<PrecondDiagnostics> out;
    for (double mu : grid) {
        PrecondDiagnostics row;
        row.mu = mu;
        row.kappa_actual = precond_condition_number(a, p, mu);
        row.kappa_bound = condno_upper_bound(p.theta(), mu, e_norm, problem.oracle.lambda_min());
        row.kappa_deflated = problem.oracle.kappa_deflated(std::min(r, problem.dim() - 1), mu);
        row.d_eff = effective_dimension(problem.oracle.eigenvalues(), mu);
        out.push_back(row);
    }
    return out;
}

} // namespace abcg
