#pragma once

// Synthetic SPD test problems with prescribed spectra.
//
// Spectrum formulas (lambda_1 >= ... >= lambda_d > 0, before `scale`):
//   fastdecay        lambda_i = rate^(i-1); default rate makes lambda_d/lambda_1 = 1e-8.
//   outliers(r,gap)  tail lambda_{r+i} = rate^(i-1), i = 1..d-r (default rate: tail
//                    ratio 1e-2); head lambda_k = gap * 10^((r-k)/(r-1)) * lambda_{r+1},
//                    i.e. r values log-spaced over [gap, 10 gap] * lambda_{r+1}.
//   bottom(r,gap)    mirror image: head lambda_i = rate^(i-1), i = 1..d-r; the last r
//                    values log-spaced over [1/(10 gap), 1/gap] * lambda_{d-r}.
//   explicit         the given values, sorted nonincreasing.

#include "abcg/linalg.hpp"
#include "abcg/operator.hpp"
#include "abcg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace abcg {

enum class SpectrumKind { fastdecay, outliers, bottom, explicit_values };

struct SpectrumSpec {
    SpectrumKind kind = SpectrumKind::fastdecay;
    Index dim = 0;
    std::optional<double> rate;  // geometric decay in (0, 1)
    Index count = 0;             // r for outliers / bottom
    double gap = 10.0;           // separation ratio > 1
    double scale = 1.0;          // multiplies every eigenvalue
    std::vector<double> values;  // explicit spectrum

    static SpectrumSpec fastdecay(Index d, std::optional<double> rate = std::nullopt)
    {
        SpectrumSpec s;
        s.dim = d;
        s.rate = rate;
        return s;
    }
    static SpectrumSpec outliers(Index d, Index r, double gap, std::optional<double> rate = std::nullopt)
    {
        SpectrumSpec s = fastdecay(d, rate);
        s.kind = SpectrumKind::outliers;
        s.count = r;
        s.gap = gap;
        return s;
    }
    static SpectrumSpec bottom(Index d, Index r, double gap, std::optional<double> rate = std::nullopt)
    {
        SpectrumSpec s = outliers(d, r, gap, rate);
        s.kind = SpectrumKind::bottom;
        return s;
    }
    static SpectrumSpec from_values(std::vector<double> values)
    {
        SpectrumSpec s;
        s.kind = SpectrumKind::explicit_values;
        s.dim = static_cast<Index>(values.size());
        s.values = std::move(values);
        return s;
    }
};

inline std::string to_string(SpectrumKind k)
{
    switch (k) {
    case SpectrumKind::fastdecay: return "fastdecay";
    case SpectrumKind::outliers: return "outliers";
    case SpectrumKind::bottom: return "bottom";
    case SpectrumKind::explicit_values: return "explicit";
    }
    return "unknown";
}

namespace matgen_detail {

inline double default_rate(Index steps, double total_ratio)
{
    return steps > 0 ? std::pow(total_ratio, 1.0 / static_cast<double>(steps)) : 0.5;
}

inline std::vector<double> geometric(Index n, double rate)
{
    std::vector<double> out(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = std::pow(rate, static_cast<double>(i));
    }
    return out;
}

inline double log_fraction(Index k, Index r)
{
    return r > 1 ? static_cast<double>(k) / static_cast<double>(r - 1) : 0.0;
}

} // namespace matgen_detail

/// Eigenvalue list for a spectrum spec, sorted nonincreasing, all positive.
inline std::vector<double> make_eigenvalues(const SpectrumSpec& spec)
{
    using namespace matgen_detail;
    if (spec.kind == SpectrumKind::explicit_values) {
        if (spec.values.empty()) {
            throw DimensionError("explicit spectrum needs at least one value");
        }
        std::vector<double> v = spec.values;
        for (double x : v) {
            if (!(x > 0.0) || !std::isfinite(x)) {
                throw DimensionError("explicit spectrum values must be finite and positive");
            }
        }
        std::sort(v.begin(), v.end(), std::greater<>());
        for (double& x : v) {
            x *= spec.scale;
        }
        return v;
    }

    const Index d = spec.dim;
    if (d < 1) {
        throw DimensionError("spectrum dimension must be >= 1, got " + std::to_string(d));
    }
    if (spec.rate && !(*spec.rate > 0.0 && *spec.rate < 1.0)) {
        throw DimensionError("decay rate must lie in (0, 1), got " + std::to_string(*spec.rate));
    }
    if (!(spec.scale > 0.0) || !std::isfinite(spec.scale)) {
        throw DimensionError("spectrum scale must be positive");
    }

    std::vector<double> eigs;
    if (spec.kind == SpectrumKind::fastdecay) {
        eigs = geometric(d, spec.rate.value_or(default_rate(d - 1, 1e-8)));
    } else {
        const Index r = spec.count;
        if (r < 1 || r >= d) {
            throw DimensionError("outlier count must satisfy 1 <= r < d, got r=" + std::to_string(r));
        }
        if (!(spec.gap > 1.0) || !std::isfinite(spec.gap)) {
            throw DimensionError("gap ratio must exceed 1, got " + std::to_string(spec.gap));
        }
        const double rate = spec.rate.value_or(default_rate(d - r - 1, 1e-2));
        if (rate * spec.gap <= 1.0) {
            throw DimensionError("tail decay rate must exceed 1/gap so the gap stays the largest jump");
        }
        const std::vector<double> bulk = geometric(d - r, rate);
        if (spec.kind == SpectrumKind::outliers) {
            for (Index k = 0; k < r; ++k) {
                eigs.push_back(spec.gap * std::pow(10.0, log_fraction(r - 1 - k, r)) * bulk.front());
            }
            eigs.insert(eigs.end(), bulk.begin(), bulk.end());
        } else {
            eigs = bulk;
            for (Index k = 0; k < r; ++k) {
                eigs.push_back(bulk.back() / spec.gap * std::pow(10.0, -log_fraction(k, r)));
            }
        }
    }
    for (double& x : eigs) {
        x *= spec.scale;
    }
    return eigs;
}

/// d x l matrix of independent standard normals, filled column by column.
inline Matrix gaussian_matrix(Index d, Index l, SeededRng& rng)
{
    if (d < 1 || l < 1) {
        throw DimensionError("gaussian_matrix needs d >= 1 and l >= 1, got " + shape_string(d, l));
    }
    Matrix g(d, l);
    for (Index j = 0; j < l; ++j) {
        for (Index i = 0; i < d; ++i) {
            g(i, j) = rng.normal();
        }
    }
    return g;
}

/// Exact spectral data of a generated matrix A = V diag(lambda) V^T. Used as
/// the reference for errors and condition numbers; never touches operator
/// counters.
class SpectralOracle {
public:
    SpectralOracle(Matrix eigenvectors, Vector eigenvalues) : v_(std::move(eigenvectors)), lambda_(std::move(eigenvalues)) {}

    Index dim() const { return lambda_.size(); }
    const Matrix& eigenvectors() const { return v_; }
    const Vector& eigenvalues() const { return lambda_; }

    /// lambda_i with 1-based index.
    double lambda(Index i) const { return lambda_(i - 1); }
    double lambda_max() const { return lambda_(0); }
    double lambda_min() const { return lambda_(lambda_.size() - 1); }

    double kappa(double mu = 0.0) const { return (lambda_max() + mu) / (lambda_min() + mu); }

    /// kappa_{r+1}(mu) = (lambda_{r+1} + mu) / (lambda_d + mu).
    double kappa_deflated(Index r, double mu) const { return (lambda(r + 1) + mu) / (lambda_min() + mu); }

    /// A_mu^{-1} b, column-wise.
    Matrix solve(const Matrix& b, double mu) const
    {
        return v_ * ((v_.transpose() * b).array().colwise() / (lambda_.array() + mu)).matrix();
    }

    Matrix apply_function(const Matrix& b, const std::function<double(double)>& f) const
    {
        const Vector fl = lambda_.unaryExpr(f);
        return v_ * ((v_.transpose() * b).array().colwise() * fl.array()).matrix();
    }

    Matrix sqrt_apply(const Matrix& b) const
    {
        return apply_function(b, [](double x) { return std::sqrt(x); });
    }

    Matrix isqrt_apply(const Matrix& b) const
    {
        return apply_function(b, [](double x) { return 1.0 / std::sqrt(x); });
    }

    /// ||A_mu^{-1} b - x||_{A_mu} / ||A_mu^{-1} b||_{A_mu}, evaluated in the eigenbasis.
    double relative_error(const Vector& x, const Vector& b, double mu) const
    {
        const Vector c = v_.transpose() * b;
        const Vector y = v_.transpose() * x;
        const Vector shifted = lambda_.array() + mu;
        const Vector exact = c.array() / shifted.array();
        const double err = ((exact - y).array().square() * shifted.array()).sum();
        const double ref = (exact.array().square() * shifted.array()).sum();
        return std::sqrt(err / ref);
    }

    /// Top-r eigenpairs.
    Matrix top_eigenvectors(Index r) const { return v_.leftCols(r); }
    Vector top_eigenvalues(Index r) const { return lambda_.head(r); }

    Matrix dense(double mu = 0.0) const
    {
        Matrix a = v_ * (lambda_.array() + mu).matrix().asDiagonal() * v_.transpose();
        return linalg::symmetrized(a);
    }

private:
    Matrix v_;
    Vector lambda_;
};

/// A generated dense problem: the matrix plus its retained eigendecomposition.
struct TestProblem {
    std::shared_ptr<const Matrix> a;
    SpectralOracle oracle;

    Index dim() const { return a->rows(); }

    /// Fresh operator over the shared matrix with its own counters.
    std::unique_ptr<DenseOperator> make_operator() const { return std::make_unique<DenseOperator>(a); }
};

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with R's
/// diagonal made positive.
inline Matrix haar_orthogonal(Index d, SeededRng& rng)
{
    return linalg::thin_qr(gaussian_matrix(d, d, rng)).q;
}

/// A = V diag(eigs) V^T with V Haar, symmetrized.
inline TestProblem make_operator(const std::vector<double>& eigs, SeededRng& rng)
{
    if (eigs.empty()) {
        throw DimensionError("make_operator needs a nonempty eigenvalue list");
    }
    const Index d = static_cast<Index>(eigs.size());
    Vector lambda(d);
    for (Index i = 0; i < d; ++i) {
        lambda(i) = eigs[static_cast<std::size_t>(i)];
        if (!(lambda(i) > 0.0) || !std::isfinite(lambda(i))) {
            throw DimensionError("make_operator needs positive finite eigenvalues");
        }
    }
    Matrix v = haar_orthogonal(d, rng);
    Matrix a = linalg::symmetrized(v * lambda.asDiagonal() * v.transpose());
    return TestProblem{std::make_shared<const Matrix>(std::move(a)), SpectralOracle(std::move(v), std::move(lambda))};
}

inline TestProblem make_problem(const SpectrumSpec& spec, SeededRng& rng)
{
    return make_operator(make_eigenvalues(spec), rng);
}

} // namespace abcg
