#pragma once

// Experiment runners behind the CLI. Each returns CSV rows; failures of a
// single method become rows named "<method>:error" and the run continues.
//
// Random streams of the run seed: 0 generates A, 1 draws b, 2 draws Omega
// (shared by every method), 3 draws the sampling block B.

#include "abcg/block_lanczos.hpp"
#include "abcg/chunked.hpp"
#include "abcg/harness/config.hpp"
#include "abcg/harness/csv.hpp"
#include "abcg/matgen.hpp"
#include "abcg/nystrom.hpp"
#include "abcg/sampling.hpp"
#include "abcg/solvers.hpp"

#include <Eigen/Eigenvalues>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace abcg::harness {

inline constexpr std::uint64_t kStreamMatrix = 0;
inline constexpr std::uint64_t kStreamRhs = 1;
inline constexpr std::uint64_t kStreamSketch = 2;
inline constexpr std::uint64_t kStreamSamples = 3;

/// The matrix of an experiment: either generated (with its exact
/// eigendecomposition) or a chunked file (no oracle unless requested).
class ProblemContext {
public:
    static ProblemContext generate(const ExperimentConfig& c)
    {
        SeededRng rng(c.seed, kStreamMatrix);
        ProblemContext ctx;
        ctx.problem_ = make_problem(c.spectrum, rng);
        ctx.dim_ = ctx.problem_->dim();
        return ctx;
    }

    static ProblemContext from_file(const std::filesystem::path& path)
    {
        ProblemContext ctx;
        ctx.path_ = path;
        ctx.dim_ = ChunkedOperator(path).dim();
        return ctx;
    }

    Index dim() const { return dim_; }
    bool has_oracle() const { return problem_.has_value(); }
    const SpectralOracle* oracle() const { return problem_ ? &problem_->oracle : nullptr; }
    const std::optional<TestProblem>& problem() const { return problem_; }

    /// A fresh operator with private counters.
    std::unique_ptr<SymmetricOperator> make_operator() const
    {
        if (problem_) {
            return std::make_unique<DenseOperator>(problem_->a);
        }
        return std::make_unique<ChunkedOperator>(path_);
    }

    /// For file-backed problems: read the matrix and eigendecompose it.
    void attach_dense_oracle()
    {
        if (problem_) {
            return;
        }
        auto a = std::make_shared<const Matrix>(linalg::symmetrized(ChunkedOperator(path_).to_dense()));
        Eigen::SelfAdjointEigenSolver<Matrix> es(*a);
        if (es.info() != Eigen::Success) {
            throw NumericalError("eigendecomposition of " + path_.string() + " failed");
        }
        if (!(es.eigenvalues()(0) > 0.0)) {
            throw NumericalError(path_.string() + " is not positive definite");
        }
        problem_ = TestProblem{a, SpectralOracle(es.eigenvectors().rowwise().reverse(), es.eigenvalues().reverse())};
    }

private:
    Index dim_ = 0;
    std::optional<TestProblem> problem_;
    std::filesystem::path path_;
};

struct RunOutput {
    std::vector<ExperimentRow> rows;
    std::vector<std::string> failures;  // "<method>: <message>"
};

namespace experiments_detail {

inline Vector draw_rhs(const ExperimentConfig& c, Index d)
{
    SeededRng rng(c.seed, kStreamRhs);
    return gaussian_matrix(d, 1, rng);
}

inline Matrix draw_sketch(const ExperimentConfig& c, Index d, Index l)
{
    SeededRng rng(c.seed, kStreamSketch);
    return gaussian_matrix(d, l, rng);
}

inline Index max_depth(const ExperimentConfig& c)
{
    Index s = 1;
    for (const auto& m : c.methods) {
        s = std::max(s, m.s);
    }
    return s;
}

inline double resolve_theta(const ThetaRule& rule, const NystromApproximation& approx, const SpectralOracle* oracle)
{
    switch (rule.kind) {
    case ThetaRule::Kind::fixed: return rule.value;
    case ThetaRule::Kind::automatic:
        if (approx.rank() == 0) {
            throw NumericalError("Nystrom approximation has rank 0");
        }
        return rule.value * approx.d(approx.rank() - 1);
    case ThetaRule::Kind::lambda_min:
        if (!oracle) {
            throw FormatError("theta = lambda_d needs a generated problem");
        }
        return rule.value * oracle->lambda_min();
    }
    return rule.value;
}

inline ExperimentRow base_row(const ExperimentConfig& c, const std::string& method)
{
    ExperimentRow r;
    r.experiment = c.experiment;
    r.method = method;
    r.seed = c.seed;
    return r;
}

inline void add_counters(ExperimentRow& row, const CostCounters& cost)
{
    row.matrix_loads = cost.matrix_loads;
    row.matvecs = cost.matvecs;
}

inline std::optional<double> error_of(const ProblemContext& ctx, const Vector& x, const Vector& b, double mu)
{
    if (!ctx.oracle()) {
        return std::nullopt;
    }
    return ctx.oracle()->relative_error(x, b, mu);
}

inline void run_bcg(const ProblemContext& ctx, const ExperimentConfig& c, const MethodSpec& m, const Vector& b, const Matrix& omega,
                    std::vector<ExperimentRow>& rows)
{
    const auto op = ctx.make_operator();
    Matrix start(ctx.dim(), 1 + omega.cols());
    start.col(0) = b;
    start.rightCols(omega.cols()) = omega;
    const Index cap = std::min(c.t_max, ctx.dim() / start.cols());
    const auto dec = block_lanczos(*op, start, cap, c.policy_for(max_depth(c)));
    for (Index t = 1; t <= dec.iterations; ++t) {
        const auto pre = dec.prefix(t);
        for (double mu : c.mus) {
            const Matrix y = bcg_coefficients(pre, mu);
            const Vector x = pre.q * y.col(0);
            auto row = base_row(c, m.label);
            row.l = omega.cols();
            row.t = t;
            row.mu = mu;
            add_counters(row, pre.cost.back());
            row.rel_err_anorm = error_of(ctx, x, b, mu);
            row.residual_norm = (pre.residual_block * y.bottomRows(pre.block_size).col(0)).norm();
            rows.push_back(row);
        }
    }
}

inline void run_cg(const ProblemContext& ctx, const ExperimentConfig& c, const MethodSpec& m, const Vector& b,
                   std::vector<ExperimentRow>& rows)
{
    const auto op = ctx.make_operator();
    const auto traces = cg_solve_path(*op, b, c.mus, c.t_max, c.policy_for(max_depth(c)));
    const std::size_t n = traces.front().iterates.size();
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < c.mus.size(); ++j) {
            const auto& tr = traces[j];
            auto row = base_row(c, m.label);
            row.t = static_cast<Index>(k + 1);
            row.mu = c.mus[j];
            add_counters(row, tr.cost[k]);
            row.rel_err_anorm = error_of(ctx, tr.iterates[k], b, c.mus[j]);
            row.residual_norm = tr.residual_norms[k];
            rows.push_back(row);
        }
    }
}

/// Preconditioner of a PCG method; Nystrom builds load `op` s times.
inline std::unique_ptr<DeflationPreconditioner> build_preconditioner(const ProblemContext& ctx, const MethodSpec& m,
                                                                     const SymmetricOperator& op, const Matrix& omega)
{
    if (m.kind == MethodKind::exact_pcg) {
        if (!ctx.oracle()) {
            throw FormatError("exact_pcg needs a generated problem");
        }
        const auto approx = exact_deflation(*ctx.oracle(), m.r);
        return std::make_unique<DeflationPreconditioner>(approx.u, approx.d, resolve_theta(m.theta, approx, ctx.oracle()));
    }
    const auto approx = nystrom_block_krylov(op, omega, m.s);
    return std::make_unique<DeflationPreconditioner>(approx.u, approx.d, resolve_theta(m.theta, approx, ctx.oracle()));
}

/// PCG rows for one shift: t counts the build depth plus PCG iterations,
/// starting with the zero iterate right after the build.
inline void pcg_rows(const ProblemContext& ctx, const ExperimentConfig& c, const MethodSpec& m, const SymmetricOperator& op,
                     const Preconditioner& p, const Vector& b, double mu, std::vector<ExperimentRow>& rows)
{
    const Index depth = m.kind == MethodKind::nystrom_pcg ? m.s : 0;
    auto row0 = base_row(c, m.label);
    if (m.kind == MethodKind::nystrom_pcg) {
        row0.s = m.s;
        row0.l = c.l;
    }
    row0.t = depth;
    row0.mu = mu;
    add_counters(row0, op.counters());
    row0.rel_err_anorm = error_of(ctx, Vector::Zero(b.size()), b, mu);
    row0.residual_norm = b.norm();
    rows.push_back(row0);
    if (c.t_max <= depth) {
        return;
    }
    const CostCounters before = op.counters();
    const auto tr = pcg_solve(op, b, mu, p, c.t_max - depth);
    for (std::size_t k = 0; k < tr.iterates.size(); ++k) {
        auto row = row0;
        row.t = depth + static_cast<Index>(k + 1);
        const CostCounters now{before.matrix_loads + tr.cost[k].matrix_loads, before.matvecs + tr.cost[k].matvecs};
        add_counters(row, now);
        row.rel_err_anorm = error_of(ctx, tr.iterates[k], b, mu);
        row.residual_norm = tr.residual_norms[k];
        rows.push_back(row);
    }
    if (tr.breakdown) {
        throw NumericalError("PCG breakdown at iteration " + std::to_string(*tr.breakdown) + " (mu=" + csv_detail::fmt(mu) + ")");
    }
}

/// shared: one operator (and one preconditioner build) serves all shifts.
inline RunOutput run_traces(const ProblemContext& ctx, const ExperimentConfig& c, bool shared)
{
    using namespace experiments_detail;
    const Index d = ctx.dim();
    validate(c, d);
    const Vector b = draw_rhs(c, d);
    const Matrix omega = draw_sketch(c, d, c.l);
    RunOutput out;
    for (const auto& m : c.methods) {
        std::vector<ExperimentRow> rows;
        try {
            switch (m.kind) {
            case MethodKind::bcg: run_bcg(ctx, c, m, b, omega, rows); break;
            case MethodKind::cg: run_cg(ctx, c, m, b, rows); break;
            case MethodKind::nystrom_pcg:
            case MethodKind::exact_pcg:
                if (shared) {
                    const auto op = ctx.make_operator();
                    const auto p = build_preconditioner(ctx, m, *op, omega);
                    for (double mu : c.mus) {
                        pcg_rows(ctx, c, m, *op, *p, b, mu, rows);
                    }
                } else {
                    for (double mu : c.mus) {
                        const auto op = ctx.make_operator();
                        const auto p = build_preconditioner(ctx, m, *op, omega);
                        pcg_rows(ctx, c, m, *op, *p, b, mu, rows);
                    }
                }
                break;
            }
        } catch (const Error& e) {
            auto row = base_row(c, m.label + ":error");
            if (m.kind == MethodKind::nystrom_pcg) {
                row.s = m.s;
                row.l = c.l;
            }
            rows.push_back(row);
            out.failures.push_back(m.label + ": " + e.what());
        }
        out.rows.insert(out.rows.end(), rows.begin(), rows.end());
    }
    return out;
}

inline double max_relative_error(const Matrix& x, const Matrix& ref)
{
    double worst = 0.0;
    for (Index i = 0; i < x.cols(); ++i) {
        worst = std::max(worst, (x.col(i) - ref.col(i)).norm() / ref.col(i).norm());
    }
    return worst;
}

} // namespace experiments_detail

/// One row per (method, t, mu). Every (method, mu) cell owns its operator,
/// so matrix_loads is that cell's counter snapshot and includes the Nystrom
/// build.
inline RunOutput run_comparison(const ProblemContext& ctx, const ExperimentConfig& c)
{
    return experiments_detail::run_traces(ctx, c, false);
}

/// Same rows as run_comparison, but each method owns one operator across the
/// whole mu grid: block-CG and CG evaluate every shift from one
/// decomposition, PCG builds its preconditioner once and re-runs per shift,
/// so its matrix_loads accumulate along the grid.
inline RunOutput run_regpath(const ProblemContext& ctx, const ExperimentConfig& c)
{
    return experiments_detail::run_traces(ctx, c, true);
}

struct SamplingOutput {
    RunOutput run;
    Matrix samples;  // mean + A^{1/2} B from the final block iterate
};

/// Block (all m columns in one Krylov space) against single-vector Lanczos
/// (m independent runs, loads counted once per iteration). Each t row
/// includes the extra load of the final multiplication by A. Relative
/// errors are the maximum over columns of ||y_i - A^{1/2} b_i|| / ||A^{1/2} b_i||.
inline SamplingOutput run_sampling(const ProblemContext& ctx, const ExperimentConfig& c)
{
    using namespace experiments_detail;
    const Index d = ctx.dim();
    validate(c, d);
    const Index m = c.sampling.m;
    if (m < 2) {
        throw FormatError("sampling needs m >= 2");
    }
    SeededRng rng(c.seed, kStreamSamples);
    const Matrix big_b = gaussian_matrix(d, m, rng);
    std::optional<Matrix> ref;
    if (ctx.oracle()) {
        ref = ctx.oracle()->sqrt_apply(big_b);
    }

    SamplingOutput out;
    auto& rows = out.run.rows;
    const auto tail = [&](const std::string& method, Index t, const CostCounters& cost, const Matrix& s) {
        auto row = base_row(c, method);
        row.l = m;
        row.t = t;
        add_counters(row, cost);
        if (ref) {
            row.rel_err_anorm = max_relative_error(s, *ref);
        }
        rows.push_back(row);
    };

    // block
    try {
        const auto op = ctx.make_operator();
        const auto scratch = ctx.make_operator();
        const auto dec = block_lanczos(*op, big_b, std::min(c.sampling.t_max, d / m));
        Matrix last;
        for (Index t = 1; t <= dec.iterations; ++t) {
            const auto pre = dec.prefix(t);
            last = block_sqrt_apply(pre, *scratch);
            CostCounters cost = pre.cost.back();
            cost.matrix_loads += 1;
            cost.matvecs += static_cast<std::uint64_t>(m);
            tail("block", t, cost, last);
        }
        const Matrix isq = block_isqrt_apply(dec);
        auto row = base_row(c, "isqrt_consistency");
        row.l = m;
        row.t = dec.iterations;
        row.residual_norm = (scratch->apply_block(isq) - last).norm() / last.norm();
        rows.push_back(row);
        out.samples = last;
        if (c.sampling.mean != 0.0) {
            out.samples.array() += c.sampling.mean;
        }
    } catch (const Error& e) {
        rows.push_back(base_row(c, "block:error"));
        out.run.failures.push_back(std::string("block: ") + e.what());
    }

    // single-vector
    try {
        const Index t_max = std::min(c.sampling.t_max, d);
        std::vector<BlockKrylovDecomposition> decs;
        const auto scratch = ctx.make_operator();
        for (Index i = 0; i < m; ++i) {
            const auto op = ctx.make_operator();
            decs.push_back(block_lanczos(*op, big_b.col(i), t_max));
        }
        Index longest = 0;
        for (const auto& dec : decs) {
            longest = std::max(longest, dec.iterations);
        }
        for (Index t = 1; t <= longest; ++t) {
            Matrix s(d, m);
            CostCounters cost;
            for (Index i = 0; i < m; ++i) {
                const auto& dec = decs[static_cast<std::size_t>(i)];
                const auto pre = dec.prefix(std::min(t, dec.iterations));
                s.col(i) = block_sqrt_apply(pre, *scratch);
                cost.matrix_loads = std::max(cost.matrix_loads, pre.cost.back().matrix_loads);
                cost.matvecs += pre.cost.back().matvecs;
            }
            cost.matrix_loads += 1;
            cost.matvecs += static_cast<std::uint64_t>(m);
            tail("single", t, cost, s);
        }
    } catch (const Error& e) {
        rows.push_back(base_row(c, "single:error"));
        out.run.failures.push_back(std::string("single: ") + e.what());
    }
    return out;
}

struct DiagnosticsOutput {
    RunOutput run;
    std::vector<BoundsRow> bounds;
};

/// Condition numbers of P^{-1/2} A_mu P^{-1/2} on a dense problem, per mu:
/// P = I, exact top-r deflation (theta = lambda_d) and the block-Krylov
/// Nystrom preconditioner for every (l, s) pair. The first l columns of one
/// sketch are used for each l.
inline DiagnosticsOutput run_diagnostics(ProblemContext& ctx, const ExperimentConfig& c)
{
    using namespace experiments_detail;
    const Index d = ctx.dim();
    validate(c, d);
    ctx.attach_dense_oracle();
    const TestProblem& problem = *ctx.problem();
    const SpectralOracle& oracle = problem.oracle;
    const Matrix& a = *problem.a;
    const Index r = c.diagnostics.r;
    const Index lmax = *std::max_element(c.diagnostics.l.begin(), c.diagnostics.l.end());
    const Matrix omega = draw_sketch(c, d, lmax);

    DiagnosticsOutput out;
    const auto emit = [&](const std::string& method, std::optional<Index> s, std::optional<Index> l, const CostCounters& cost,
                          const Preconditioner& p, double mu, std::optional<double> bound) {
        auto row = base_row(c, method);
        row.s = s;
        row.l = l;
        row.mu = mu;
        add_counters(row, cost);
        row.kappa_actual = precond_condition_number(a, p, mu);
        out.run.rows.push_back(row);

        BoundsRow br;
        br.experiment = c.experiment;
        br.method = method;
        br.s = s;
        br.l = l;
        br.mu = mu;
        br.kappa_actual = *row.kappa_actual;
        br.kappa_bound = bound;
        if (r > 0) {
            br.kappa_deflated = oracle.kappa_deflated(r, mu);
        }
        br.d_eff = effective_dimension(oracle.eigenvalues(), mu);
        br.seed = c.seed;
        out.bounds.push_back(br);
    };

    for (double mu : c.mus) {
        emit("identity", std::nullopt, std::nullopt, CostCounters{}, IdentityPreconditioner{}, mu, std::nullopt);
    }
    if (r > 0) {
        const auto approx = exact_deflation(oracle, r);
        const DeflationPreconditioner p(approx.u, approx.d, oracle.lambda_min());
        const double e = oracle.lambda(r + 1);
        for (double mu : c.mus) {
            emit("exact_r" + std::to_string(r), std::nullopt, std::nullopt, CostCounters{}, p, mu,
                 condno_upper_bound(p.theta(), mu, e, oracle.lambda_min()));
        }
    }
    for (Index l : c.diagnostics.l) {
        for (Index s : c.diagnostics.s) {
            const std::string method = "nystrom_s" + std::to_string(s);
            try {
                const auto op = ctx.make_operator();
                const auto approx = nystrom_block_krylov(*op, omega.leftCols(l), s);
                const DeflationPreconditioner p(approx.u, approx.d, resolve_theta(c.diagnostics.theta, approx, &oracle));
                const double e = approximation_error(a, approx);
                for (double mu : c.mus) {
                    emit(method, s, l, op->counters(), p, mu, condno_upper_bound(p.theta(), mu, e, oracle.lambda_min()));
                }
            } catch (const Error& e) {
                auto row = base_row(c, method + ":error");
                row.s = s;
                row.l = l;
                out.run.rows.push_back(row);
                out.run.failures.push_back(method + " l=" + std::to_string(l) + ": " + e.what());
            }
        }
    }
    return out;
}

/// d x m float64 samples, column-major, little-endian, no header.
inline void write_samples(std::ostream& out, const Matrix& samples)
{
    for (Index j = 0; j < samples.cols(); ++j) {
        for (Index i = 0; i < samples.rows(); ++i) {
            const double v = chunked_detail::to_little(samples(i, j));
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
}

/// Eigenvalues of the generated spectrum as a one-column CSV.
inline void write_spectrum(std::ostream& out, const SpectrumSpec& spec)
{
    out << "lambda\n";
    for (double v : make_eigenvalues(spec)) {
        out << csv_detail::fmt(v) << '\n';
    }
}

} // namespace abcg::harness
