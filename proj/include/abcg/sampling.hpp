#pragma once

// Block-Lanczos square-root iterates and the elliptic-integral helpers.
//
//   sqrt  iterate: A Q T^{-1/2} E_1 R
//   isqrt iterate:   Q T^{-1/2} E_1 R
//
// (2/pi) int_0^inf (T + z^2 I)^{-1} dz = T^{-1/2}, so the integrals over
// block-CG iterates collapse to one small eigendecomposition.

#include "abcg/block_lanczos.hpp"
#include "abcg/operator.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <string>

namespace abcg {

struct InverseSqrtCoefficients {
    Matrix y;              // T^{-1/2} E_1 R
    bool clamped = false;  // some eigenvalue of T sat below 1e-14 * max and was raised
};

inline InverseSqrtCoefficients isqrt_coefficients(const BlockKrylovDecomposition& dec)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(dec.t);
    if (es.info() != Eigen::Success) {
        throw NumericalError("sqrt iterate: eigendecomposition of T failed");
    }
    Vector ev = es.eigenvalues();
    const double top = ev(ev.size() - 1);
    if (!(top > 0.0)) {
        throw NumericalError("sqrt iterate: T is not positive definite");
    }
    InverseSqrtCoefficients out;
    const double floor = 1e-14 * top;
    for (Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -1e-8 * top) {
            throw NumericalError("sqrt iterate: T has eigenvalue " + std::to_string(ev(i)) + ", not positive definite");
        }
        if (ev(i) < floor) {
            ev(i) = floor;
            out.clamped = true;
        }
    }
    const Index m = dec.block_size;
    const Matrix& v = es.eigenvectors();
    const Matrix e1r = v.topRows(m).transpose() * dec.r;  // V^T E_1 R
    out.y = v * (e1r.array().colwise() / ev.array().sqrt()).matrix();
    return out;
}

/// Approximation of A^{-1/2} B; no matrix-loads.
inline Matrix block_isqrt_apply(const BlockKrylovDecomposition& dec)
{
    return dec.q * isqrt_coefficients(dec).y;
}

/// Approximation of A^{1/2} B; one matrix-load on `op`.
inline Matrix block_sqrt_apply(const BlockKrylovDecomposition& dec, const SymmetricOperator& op)
{
    return op.apply_block(block_isqrt_apply(dec));
}

/// (2/pi) int_0^inf lambda / (lambda + z^2) dz by adaptive quadrature.
/// Equals sqrt(lambda); used to check the closed form.
inline double scalar_sqrt_integral(double lambda)
{
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw DimensionError("scalar_sqrt_integral: lambda must be positive and finite");
    }
    const auto f = [lambda](double z) { return lambda / (lambda + z * z); };
    // The integrand's scale is sqrt(lambda); split there.
    const double knee = std::sqrt(lambda);
    double err = 0.0;
    const double head = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, knee, 15, 1e-14, &err);
    boost::math::quadrature::exp_sinh<double> tail_rule;
    const double tail = tail_rule.integrate([&](double u) { return f(knee + u); }, 1e-14);
    return (2.0 / std::numbers::pi) * (head + tail);
}

/// Complete elliptic integral of the first kind K(m) = int_0^{pi/2} (1 - m sin^2)^{-1/2},
/// via the arithmetic-geometric mean; any m < 1.
inline double elliptic_K(double m)
{
    if (!(m < 1.0) || !std::isfinite(m)) {
        throw DimensionError("elliptic_K: parameter must be finite and < 1, got " + std::to_string(m));
    }
    double a = 1.0;
    double g = std::sqrt(1.0 - m);
    for (int it = 0; it < 64 && std::abs(a - g) > 1e-12 * a; ++it) {
        const double an = 0.5 * (a + g);
        g = std::sqrt(a * g);
        a = an;
    }
    return std::numbers::pi / (a + g);
}

/// K(m) by tanh-sinh quadrature of the defining integral.
inline double elliptic_K_quadrature(double m)
{
    if (!(m < 1.0) || !std::isfinite(m)) {
        throw DimensionError("elliptic_K_quadrature: parameter must be finite and < 1");
    }
    boost::math::quadrature::tanh_sinh<double> rule;
    return rule.integrate(
        [m](double z) {
            const double s = std::sin(z);
            return 1.0 / std::sqrt(1.0 - m * s * s);
        },
        0.0, std::numbers::pi / 2, 1e-14);
}

/// (1/2) log(16 kappa): prefactor in the square-root error bound.
inline double sqrt_error_constant(double kappa)
{
    if (!(kappa >= 1.0)) {
        throw DimensionError("sqrt_error_constant: kappa must be >= 1");
    }
    return 0.5 * std::log(16.0 * kappa);
}

/// Largest deflation rank admitted for m samples at failure probability delta:
/// (m - 1) / ceil(log(m / delta) / log(100)) - 2, floored at 0.
inline Index sampling_deflation_rank(Index m, double delta)
{
    const double blocks = std::ceil(std::log(static_cast<double>(m) / delta) / std::log(100.0));
    const double r = std::floor(static_cast<double>(m - 1) / blocks - 2.0);
    return r > 0.0 ? static_cast<Index>(r) : 0;
}

/// Relative error bound for the sqrt iterate at iteration t:
/// log(16 kappa) exp(-(t - (2 + log(d)/2)) / (3 sqrt(kappa_{r+1}))).
inline double sqrt_error_bound(double kappa, double kappa_deflated, Index t, Index d)
{
    const double s = 2.0 + 0.5 * std::log(static_cast<double>(d));
    return 2.0 * sqrt_error_constant(kappa) * std::exp(-(static_cast<double>(t) - s) / (3.0 * std::sqrt(kappa_deflated)));
}

} // namespace abcg
