#pragma once

// Block Lanczos: orthonormal basis Q of the block Krylov space K_t(A, B) and
// the banded projection T = Q^T A Q, with selectable reorthogonalization.

#include "abcg/linalg.hpp"
#include "abcg/operator.hpp"

#include <string>
#include <vector>

namespace abcg {

struct ReorthPolicy {
    enum class Kind { full, none, partial };

    Kind kind = Kind::full;
    Index keep = 0;  // partial: number of leading iterations kept for reorthogonalization

    static ReorthPolicy full() { return {Kind::full, 0}; }
    static ReorthPolicy none() { return {Kind::none, 0}; }
    /// Full reorthogonalization for the first k iterations, then each new
    /// block is orthogonalized against those k iterations' basis only.
    static ReorthPolicy partial(Index k) { return {Kind::partial, k}; }

    std::string describe() const
    {
        switch (kind) {
        case Kind::full: return "full";
        case Kind::none: return "none";
        case Kind::partial: return "partial:" + std::to_string(keep);
        }
        return "?";
    }
};

struct BlockKrylovDecomposition {
    Matrix q;               // d x (m * iterations), orthonormal columns
    Matrix t;               // (m * iterations) square, symmetric, block tridiagonal
    Matrix r;               // m x m, B = Q_1 R
    Matrix residual_block;  // A Q_t - Q_t T_t restricted to the last block column
    Index block_size = 0;
    Index iterations = 0;
    bool terminated_early = false;
    ReorthPolicy policy;
    /// Counter deltas after each iteration (1-based iteration j at index j-1).
    std::vector<CostCounters> cost;

    Index dim() const { return q.rows(); }
    Index basis_size() const { return q.cols(); }

    /// Decomposition after the first k iterations of the same run.
    BlockKrylovDecomposition prefix(Index k) const
    {
        if (k < 1 || k > iterations) {
            throw DimensionError("prefix(" + std::to_string(k) + ") of a decomposition with " + std::to_string(iterations) +
                                 " iterations");
        }
        if (k == iterations) {
            return *this;
        }
        const Index m = block_size;
        BlockKrylovDecomposition out;
        out.q = q.leftCols(k * m);
        out.t = t.topLeftCorner(k * m, k * m);
        out.r = r;
        out.residual_block = q.middleCols(k * m, m) * t.block(k * m, (k - 1) * m, m, m);
        out.block_size = m;
        out.iterations = k;
        out.terminated_early = false;
        out.policy = policy;
        out.cost.assign(cost.begin(), cost.begin() + k);
        return out;
    }
};

/// Incremental block Lanczos on (A, B), one iteration per `step()`.
///
/// Every iteration applies A once to the newest block, so t iterations cost
/// t matrix-loads and t * m matvecs; the residual block comes out of the
/// last product at no extra cost. If the next block is numerically rank
/// deficient (smallest singular value below 1e-10 times the largest column
/// norm of the product that produced it), the process stops with
/// terminated_early set.
class BlockLanczosProcess {
public:
    BlockLanczosProcess(const SymmetricOperator& op, const Matrix& b, Index max_iterations,
                        ReorthPolicy policy = ReorthPolicy::full())
        : op_(op), max_iterations_(max_iterations)
    {
        const Index d = op.dim();
        const Index m = b.cols();
        if (b.rows() != d || m < 1) {
            throw DimensionError("block_lanczos: starting block is " + shape_string(b.rows(), b.cols()) + " for a " +
                                 shape_string(d, d) + " operator");
        }
        if (max_iterations < 1 || m * max_iterations > d) {
            throw DimensionError("block_lanczos: need t >= 1 and m*t <= d (m=" + std::to_string(m) +
                                 ", t=" + std::to_string(max_iterations) + ", d=" + std::to_string(d) + ")");
        }
        if (!b.allFinite()) {
            throw DimensionError("block_lanczos: starting block has non-finite entries");
        }
        const Vector sv = linalg::singular_values(b);
        if (!(sv(0) > 0.0) || !(sv(sv.size() - 1) >= 1e-10 * sv(0))) {
            throw DimensionError("block_lanczos: starting block is numerically rank deficient");
        }

        start_ = op.counters();
        dec_.block_size = m;
        dec_.policy = policy;
        q_ = Matrix::Zero(d, m * max_iterations);
        t_ = Matrix::Zero(m * max_iterations, m * max_iterations);
        linalg::ThinQr first = linalg::thin_qr(b);
        dec_.r = first.r;
        q_.leftCols(m) = first.q;
    }

    Index iterations() const { return dec_.iterations; }

    /// False once max_iterations is reached or the block Krylov space stopped growing.
    bool can_step() const { return dec_.iterations < max_iterations_ && !dec_.terminated_early; }

    /// Performs one iteration; returns can_step() afterwards.
    bool step()
    {
        if (!can_step()) {
            throw DimensionError("block_lanczos: no further iterations available");
        }
        const Index m = dec_.block_size;
        const Index j = dec_.iterations;
        if (j > 0) {
            // Commit the block produced by the previous iteration.
            linalg::ThinQr next = linalg::thin_qr(pending_);
            q_.middleCols(j * m, m) = next.q;
            t_.block(j * m, (j - 1) * m, m, m) = next.r;
            t_.block((j - 1) * m, j * m, m, m) = next.r.transpose();
        }

        const Matrix qj = q_.middleCols(j * m, m);
        Matrix z = op_.apply_block(qj);
        const double product_scale = linalg::max_column_norm(z);
        if (j > 0) {
            z.noalias() -= q_.middleCols((j - 1) * m, m) * t_.block(j * m, (j - 1) * m, m, m).transpose();
        }
        const Matrix diag = linalg::symmetrized(qj.transpose() * z);
        z.noalias() -= qj * diag;

        Index against = 0;
        switch (dec_.policy.kind) {
        case ReorthPolicy::Kind::full: against = j + 1; break;
        case ReorthPolicy::Kind::none: against = 0; break;
        case ReorthPolicy::Kind::partial: against = std::min(j + 1, dec_.policy.keep); break;
        }
        if (against > 0) {
            const auto basis = q_.leftCols(against * m);
            for (int pass = 0; pass < 2; ++pass) {
                z.noalias() -= basis * (basis.transpose() * z);
            }
        }
        if (!z.allFinite() || !diag.allFinite()) {
            throw NumericalError("block_lanczos: non-finite values at iteration " + std::to_string(j + 1));
        }
        t_.block(j * m, j * m, m, m) = diag;
        const Vector zsv = linalg::singular_values(z);
        if (!(zsv(zsv.size() - 1) > 1e-10 * product_scale)) {
            // Invariant subspace (or exhaustion of R^d) reached.
            dec_.terminated_early = true;
        }
        pending_ = std::move(z);
        dec_.cost.push_back(op_.counters() - start_);
        dec_.iterations = j + 1;
        return can_step();
    }

    /// Snapshot of the decomposition after the iterations performed so far.
    BlockKrylovDecomposition decomposition() const
    {
        if (dec_.iterations < 1) {
            throw DimensionError("block_lanczos: no iterations performed");
        }
        const Index n = dec_.iterations * dec_.block_size;
        BlockKrylovDecomposition out = dec_;
        out.q = q_.leftCols(n);
        out.t = t_.topLeftCorner(n, n);
        out.residual_block = pending_;
        return out;
    }

private:
    const SymmetricOperator& op_;
    Index max_iterations_;
    CostCounters start_;
    BlockKrylovDecomposition dec_;  // metadata; q/t live in the preallocated buffers
    Matrix q_;
    Matrix t_;
    Matrix pending_;
};

/// Runs t iterations of block Lanczos on (A, B) (fewer if the Krylov space
/// stops growing, with terminated_early set).
inline BlockKrylovDecomposition block_lanczos(const SymmetricOperator& op, const Matrix& b, Index t,
                                              ReorthPolicy policy = ReorthPolicy::full())
{
    BlockLanczosProcess process(op, b, t, policy);
    while (process.can_step()) {
        process.step();
    }
    return process.decomposition();
}

struct DecompositionReport {
    double orth_err = 0.0;        // ||Q^T Q - I||_2
    double projection_err = 0.0;  // ||Q^T A Q - T||_2 / ||A||_2
    double recurrence_err = 0.0;  // ||A Q - Q T - residual E_t^T||_2 / ||A||_2
    bool bandwidth_ok = false;    // T has bandwidth <= 2m + 1
};

/// Checks a decomposition against the dense matrix it came from.
inline DecompositionReport verify_decomposition(const Matrix& a, const BlockKrylovDecomposition& dec)
{
    if (dec.iterations < 1 || dec.q.cols() == 0) {
        throw DimensionError("verify_decomposition: decomposition has no iterations");
    }
    const Index n = dec.q.cols();
    const Index m = dec.block_size;
    const double anorm = linalg::symmetric_norm(a);
    const Matrix aq = a * dec.q;

    DecompositionReport rep;
    rep.orth_err = linalg::symmetric_norm(dec.q.transpose() * dec.q - Matrix::Identity(n, n));
    rep.projection_err = linalg::symmetric_norm(linalg::symmetrized(dec.q.transpose() * aq) - dec.t) / anorm;
    Matrix rec = aq - dec.q * dec.t;
    rec.rightCols(m) -= dec.residual_block;
    rep.recurrence_err = linalg::singular_values(rec)(0) / anorm;
    rep.bandwidth_ok = linalg::half_bandwidth(dec.t) <= m && (dec.t - dec.t.transpose()).norm() == 0.0;
    return rep;
}

} // namespace abcg
