#pragma once

#include "abcg/types.hpp"

#include <atomic>
#include <memory>
#include <utility>

namespace abcg {

/// Cost model of an operator: one matrix-load per block apply, one matvec
/// per column applied.
struct CostCounters {
    std::uint64_t matrix_loads = 0;
    std::uint64_t matvecs = 0;

    friend bool operator==(const CostCounters&, const CostCounters&) = default;

    CostCounters operator-(const CostCounters& earlier) const
    {
        return {matrix_loads - earlier.matrix_loads, matvecs - earlier.matvecs};
    }
};

/// Symmetric positive-definite operator reachable only through block
/// products. Implementations provide `multiply`; the base class validates
/// input and keeps the counters.
///
/// Operators are immutable after construction and may be shared between
/// threads. Counters are atomic, but a counter snapshot is only meaningful
/// when one run owns the operator.
class SymmetricOperator {
public:
    explicit SymmetricOperator(Index dim) : dim_(dim)
    {
        if (dim < 1) {
            throw DimensionError("operator dimension must be positive, got " + std::to_string(dim));
        }
    }
    SymmetricOperator(const SymmetricOperator&) = delete;
    SymmetricOperator& operator=(const SymmetricOperator&) = delete;
    virtual ~SymmetricOperator() = default;

    Index dim() const { return dim_; }

    /// Returns A * x. Counts one matrix-load and x.cols() matvecs.
    Matrix apply_block(const Matrix& x) const
    {
        if (x.rows() != dim_ || x.cols() < 1) {
            throw DimensionError("apply_block: operator is " + shape_string(dim_, dim_) + " but input block is " +
                                 shape_string(x.rows(), x.cols()));
        }
        if (!x.allFinite()) {
            throw DimensionError("apply_block: input block has non-finite entries");
        }
        Matrix y(dim_, x.cols());
        multiply(x, y);
        loads_.fetch_add(1, std::memory_order_relaxed);
        matvecs_.fetch_add(static_cast<std::uint64_t>(x.cols()), std::memory_order_relaxed);
        return y;
    }

    CostCounters counters() const
    {
        return {loads_.load(std::memory_order_relaxed), matvecs_.load(std::memory_order_relaxed)};
    }

    void reset_counters()
    {
        loads_.store(0, std::memory_order_relaxed);
        matvecs_.store(0, std::memory_order_relaxed);
    }

protected:
    /// y (preallocated, dim x x.cols()) <- A * x.
    virtual void multiply(const Matrix& x, Matrix& y) const = 0;

private:
    Index dim_;
    mutable std::atomic<std::uint64_t> loads_{0};
    mutable std::atomic<std::uint64_t> matvecs_{0};
};

/// In-memory operator over a dense symmetric matrix. The matrix is shared,
/// so several operators (each with private counters) can wrap one matrix.
class DenseOperator final : public SymmetricOperator {
public:
    explicit DenseOperator(Matrix a) : DenseOperator(std::make_shared<const Matrix>(std::move(a))) {}

    explicit DenseOperator(std::shared_ptr<const Matrix> a)
        : SymmetricOperator(a ? a->rows() : 0), a_(std::move(a))
    {
        if (a_->rows() != a_->cols()) {
            throw DimensionError("dense operator needs a square matrix, got " + shape_string(a_->rows(), a_->cols()));
        }
    }

    const Matrix& matrix() const { return *a_; }
    const std::shared_ptr<const Matrix>& shared_matrix() const { return a_; }

protected:
    void multiply(const Matrix& x, Matrix& y) const override { y.noalias() = (*a_) * x; }

private:
    std::shared_ptr<const Matrix> a_;
};

/// A + shift * I over a borrowed base operator. Loads are counted on this
/// wrapper only; the base operator's counters also advance.
class ShiftedOperator final : public SymmetricOperator {
public:
    ShiftedOperator(const SymmetricOperator& base, double shift) : SymmetricOperator(base.dim()), base_(base), shift_(shift) {}

    double shift() const { return shift_; }

protected:
    void multiply(const Matrix& x, Matrix& y) const override
    {
        y = base_.apply_block(x);
        y.noalias() += shift_ * x;
    }

private:
    const SymmetricOperator& base_;
    double shift_;
};

} // namespace abcg
