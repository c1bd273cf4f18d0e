#pragma once

// CG, PCG and block-CG for (A + mu I) x = b.
//
// Block-CG iterates come from a block Lanczos decomposition:
//   X(mu) = Q (T + mu I)^{-1} E_1 R,
// the block form of ||b|| Q (T + mu I)^{-1} e_1. Krylov spaces are shift
// invariant, so one decomposition serves every mu >= 0.

#include "abcg/block_lanczos.hpp"
#include "abcg/linalg.hpp"
#include "abcg/matgen.hpp"
#include "abcg/operator.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace abcg {

/// Regularization path: nonnegative finite shifts in ascending order.
class ShiftGrid {
public:
    ShiftGrid() = default;
    explicit ShiftGrid(std::vector<double> mus) : mus_(std::move(mus))
    {
        std::sort(mus_.begin(), mus_.end());
        for (double mu : mus_) {
            if (!(mu >= 0.0) || !std::isfinite(mu)) {
                throw DimensionError("shift grid entries must be finite and nonnegative");
            }
        }
    }

    /// n points log-spaced over [lo, hi], optionally preceded by 0.
    static ShiftGrid logspace(double lo, double hi, Index n, bool with_zero = false)
    {
        if (!(lo > 0.0) || !(hi >= lo) || n < 1) {
            throw DimensionError("logspace grid needs 0 < lo <= hi and n >= 1");
        }
        std::vector<double> mus;
        if (with_zero) {
            mus.push_back(0.0);
        }
        for (Index i = 0; i < n; ++i) {
            const double f = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
            mus.push_back(lo * std::pow(hi / lo, f));
        }
        return ShiftGrid(std::move(mus));
    }

    const std::vector<double>& values() const { return mus_; }
    std::size_t size() const { return mus_.size(); }
    bool empty() const { return mus_.empty(); }
    auto begin() const { return mus_.begin(); }
    auto end() const { return mus_.end(); }

private:
    std::vector<double> mus_;
};

// ---------------------------------------------------------------- block-CG

/// Y = (T + mu I)^{-1} E_1 R via a banded Cholesky of bandwidth m.
inline Matrix bcg_coefficients(const BlockKrylovDecomposition& dec, double mu)
{
    if (!(mu >= 0.0) || !std::isfinite(mu)) {
        throw DimensionError("shift mu must be finite and nonnegative");
    }
    const Index n = dec.basis_size();
    const Index m = dec.block_size;
    Matrix rhs = Matrix::Zero(n, m);
    rhs.topRows(m) = dec.r;
    const linalg::BandedCholesky chol(dec.t, m, mu);
    return chol.solve(rhs);
}

/// All block-CG iterates at shift mu (column i solves for column i of B).
inline Matrix evaluate_bcg(const BlockKrylovDecomposition& dec, double mu)
{
    return dec.q * bcg_coefficients(dec, mu);
}

/// Block-CG iterate for starting column `column` (0-based).
inline Vector evaluate_bcg_iterate(const BlockKrylovDecomposition& dec, double mu, Index column)
{
    if (column < 0 || column >= dec.block_size) {
        throw DimensionError("column index " + std::to_string(column) + " outside block of size " +
                             std::to_string(dec.block_size));
    }
    return dec.q * bcg_coefficients(dec, mu).col(column);
}

/// ||b_i - (A + mu I) x_i|| for every column, from the Lanczos relation
/// A Q = Q T + Z E_t^T: the residual is -Z times the last block of Y.
inline Vector bcg_residual_norms(const BlockKrylovDecomposition& dec, double mu)
{
    const Matrix y = bcg_coefficients(dec, mu);
    const Matrix res = dec.residual_block * y.bottomRows(dec.block_size);
    return res.colwise().norm().transpose();
}

// ---------------------------------------------------------------- preconditioners

/// Symmetric positive-definite preconditioner P_mu, accessed through P_mu^{-1}.
class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    virtual Matrix apply_inverse(double mu, const Matrix& v) const = 0;
    virtual std::string descriptor() const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
public:
    Matrix apply_inverse(double, const Matrix& v) const override { return v; }
    std::string descriptor() const override { return "identity"; }
};

// ---------------------------------------------------------------- traces

/// Iterates x_1 .. x_k of a single-vector method with their cost.
struct SolveTrace {
    std::vector<Vector> iterates;
    std::vector<double> residual_norms;  // ||b - A_mu x_k||
    std::vector<CostCounters> cost;      // operator counter delta at each iterate
    std::optional<Index> breakdown;      // iteration at which the recurrence lost positivity
    bool converged_exactly = false;      // residual hit exactly zero
};

/// PCG iterates x_1..x_t by the standard recurrence. Iterate k costs k
/// matrix-loads and k + 1 applications of P^{-1} (one per residual).
inline SolveTrace pcg_solve(const SymmetricOperator& op, const Vector& b, double mu, const Preconditioner& precond, Index t)
{
    if (b.size() != op.dim()) {
        throw DimensionError("pcg_solve: right-hand side has length " + std::to_string(b.size()) + ", operator is " +
                             std::to_string(op.dim()));
    }
    if (t < 1) {
        throw DimensionError("pcg_solve: need t >= 1");
    }
    if (!(mu >= 0.0) || !std::isfinite(mu)) {
        throw DimensionError("pcg_solve: shift must be finite and nonnegative");
    }
    if (b.norm() == 0.0 || !b.allFinite()) {
        throw DimensionError("pcg_solve: right-hand side must be nonzero and finite");
    }

    const CostCounters start = op.counters();
    SolveTrace trace;
    Vector x = Vector::Zero(b.size());
    Vector r = b;
    Vector z = precond.apply_inverse(mu, r);
    Vector p = z;
    double rz = r.dot(z);
    if (!(rz > 0.0)) {
        trace.breakdown = 0;
        return trace;
    }
    for (Index k = 1; k <= t; ++k) {
        Vector ap = op.apply_block(p);
        ap.noalias() += mu * p;
        const double curvature = p.dot(ap);
        if (!(curvature > 0.0) || !std::isfinite(curvature)) {
            trace.breakdown = k;
            break;
        }
        const double alpha = rz / curvature;
        x.noalias() += alpha * p;
        r.noalias() -= alpha * ap;
        trace.iterates.push_back(x);
        trace.residual_norms.push_back(r.norm());
        trace.cost.push_back(op.counters() - start);
        if (k == t) {
            break;
        }
        if (r.squaredNorm() == 0.0) {
            trace.converged_exactly = true;
            break;
        }
        z = precond.apply_inverse(mu, r);
        const double rz_next = r.dot(z);
        if (!(rz_next > 0.0) || !std::isfinite(rz_next)) {
            trace.breakdown = k + 1;
            break;
        }
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    return trace;
}

/// CG iterates x_1..x_k at each shift in `mus`, all from one Lanczos run
/// (block-CG with m = 1). Returns one trace per shift.
inline std::vector<SolveTrace> cg_solve_path(const SymmetricOperator& op, const Vector& b, const std::vector<double>& mus, Index t,
                                             ReorthPolicy policy = ReorthPolicy::full())
{
    if (b.size() != op.dim() || b.norm() == 0.0) {
        throw DimensionError("cg_solve: right-hand side must be nonzero with the operator's dimension");
    }
    const BlockKrylovDecomposition dec = block_lanczos(op, b, std::min(t, op.dim()), policy);
    std::vector<SolveTrace> out(mus.size());
    for (Index k = 1; k <= dec.iterations; ++k) {
        const BlockKrylovDecomposition pre = dec.prefix(k);
        for (std::size_t s = 0; s < mus.size(); ++s) {
            const Matrix y = bcg_coefficients(pre, mus[s]);
            out[s].iterates.push_back(pre.q * y.col(0));
            out[s].residual_norms.push_back((pre.residual_block * y.bottomRows(1)).norm());
            out[s].cost.push_back(pre.cost.back());
        }
    }
    for (auto& tr : out) {
        tr.converged_exactly = dec.terminated_early;
    }
    return out;
}

/// CG iterates x_1..x_t for (A + mu I) x = b (Lanczos with full
/// reorthogonalization by default). Stops early if the Krylov space becomes
/// invariant, in which case the last iterate is exact.
inline SolveTrace cg_solve(const SymmetricOperator& op, const Vector& b, double mu, Index t,
                           ReorthPolicy policy = ReorthPolicy::full())
{
    return cg_solve_path(op, b, {mu}, t, policy).front();
}

/// ||A_mu^{-1} b - x||_{A_mu} / ||A_mu^{-1} b||_{A_mu}, from the retained eigendecomposition.
inline double a_norm_error(const Vector& x, double mu, const SpectralOracle& oracle, const Vector& b)
{
    return oracle.relative_error(x, b, mu);
}

// ---------------------------------------------------------------- production solve

struct RegularizedSolution {
    std::vector<double> mus;
    Matrix x;                   // d x |mus|, column j solves (A + mus[j] I) x = b
    Vector relative_residuals;  // ||b - A_mu x|| / ||b|| per shift
    Index iterations = 0;
    CostCounters cost;
    bool converged = false;
};

/// Augmented block-CG on [b Omega] for every shift in `grid`, stopping once
/// every relative residual is at most `tol` (or after max_iterations).
inline RegularizedSolution solve_regularized(const SymmetricOperator& op, const Vector& b, const Matrix& omega, const ShiftGrid& grid,
                                             Index max_iterations, double tol = 1e-10,
                                             ReorthPolicy policy = ReorthPolicy::full())
{
    if (grid.empty()) {
        throw DimensionError("solve_regularized: empty shift grid");
    }
    Matrix start(op.dim(), 1 + omega.cols());
    start.col(0) = b;
    if (omega.cols() > 0) {
        start.rightCols(omega.cols()) = omega;
    }
    const Index cap = std::min(max_iterations, op.dim() / start.cols());
    BlockLanczosProcess process(op, start, cap, policy);
    const double bnorm = b.norm();

    RegularizedSolution sol;
    sol.mus = grid.values();
    while (process.can_step()) {
        process.step();
        const BlockKrylovDecomposition dec = process.decomposition();
        double worst = 0.0;
        for (double mu : grid) {
            worst = std::max(worst, bcg_residual_norms(dec, mu)(0) / bnorm);
        }
        if (worst <= tol) {
            break;
        }
    }
    const BlockKrylovDecomposition dec = process.decomposition();
    sol.x.resize(op.dim(), static_cast<Index>(grid.size()));
    sol.relative_residuals.resize(static_cast<Index>(grid.size()));
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const Matrix y = bcg_coefficients(dec, grid.values()[j]);
        sol.x.col(static_cast<Index>(j)) = dec.q * y.col(0);
        sol.relative_residuals(static_cast<Index>(j)) = (dec.residual_block * y.bottomRows(dec.block_size).col(0)).norm() / bnorm;
    }
    sol.iterations = dec.iterations;
    sol.cost = dec.cost.back();
    sol.converged = sol.relative_residuals.maxCoeff() <= tol || dec.terminated_early;
    return sol;
}

} // namespace abcg
