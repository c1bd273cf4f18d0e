#include "abcg/matgen.hpp"
#include "abcg/sampling.hpp"
#include "abcg/solvers.hpp"

#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

using namespace abcg;

namespace {

Matrix diag2()
{
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 4.0;
    a(1, 1) = 1.0;
    return a;
}

} // namespace

TEST(Sqrt, IdentityIsExact)
{
    DenseOperator op(Matrix::Identity(4, 4));
    const Vector b = Vector::LinSpaced(4, 1, 4);
    const auto dec = block_lanczos(op, b, 1);
    EXPECT_LE((block_sqrt_apply(dec, op) - b).norm(), 1e-12);
    EXPECT_LE((block_isqrt_apply(dec) - b).norm(), 1e-12);
}

TEST(Sqrt, DiagonalExhaustion)
{
    DenseOperator op(diag2());
    const auto dec = block_lanczos(op, Matrix::Identity(2, 2), 1);
    const auto before = op.counters();
    const Matrix s = block_sqrt_apply(dec, op);
    EXPECT_EQ((op.counters() - before), (CostCounters{1, 2}));
    EXPECT_NEAR(s(0, 0), 2.0, 1e-10);
    EXPECT_NEAR(s(1, 1), 1.0, 1e-10);
    EXPECT_NEAR(s(0, 1), 0.0, 1e-10);
    EXPECT_NEAR(s(1, 0), 0.0, 1e-10);
    const Matrix is = block_isqrt_apply(dec);
    EXPECT_NEAR(is(0, 0), 0.5, 1e-10);
    EXPECT_NEAR(is(1, 1), 1.0, 1e-10);
    EXPECT_EQ((op.counters() - before), (CostCounters{1, 2}));
}

TEST(Sqrt, InverseConsistency)
{
    SeededRng rng(1);
    const Matrix g = gaussian_matrix(100, 100, rng);
    const Matrix a = linalg::symmetrized(g * g.transpose() / 100.0 + 0.1 * Matrix::Identity(100, 100));
    DenseOperator op(a);
    const auto dec = block_lanczos(op, gaussian_matrix(100, 4, rng), 25);
    const Matrix s = block_sqrt_apply(dec, op);
    EXPECT_LE((a * block_isqrt_apply(dec) - s).norm() / s.norm(), 1e-10);
}

TEST(Sqrt, ExhaustionMatchesOracle)
{
    SeededRng rng(2);
    const TestProblem p = make_problem(SpectrumSpec::fastdecay(60, 0.9), rng);
    DenseOperator op(p.a);
    const Matrix b = gaussian_matrix(60, 6, rng);
    const auto dec = block_lanczos(op, b, 10);
    const Matrix ref = p.oracle.sqrt_apply(b);
    EXPECT_LE((block_sqrt_apply(dec, op) - ref).norm(), 1e-8 * ref.norm());
}

TEST(Sqrt, ErrorNonincreasingInT)
{
    SeededRng rng(3);
    const TestProblem p = make_problem(SpectrumSpec::fastdecay(200), rng);
    DenseOperator op(p.a);
    const Matrix b = gaussian_matrix(200, 3, rng);
    const Matrix ref = p.oracle.sqrt_apply(b);
    const auto dec = block_lanczos(op, b, 30);
    Vector prev = Vector::Constant(3, std::numeric_limits<double>::infinity());
    DenseOperator scratch(p.a);
    for (Index t = 1; t <= 30; ++t) {
        const Matrix s = block_sqrt_apply(dec.prefix(t), scratch);
        for (Index i = 0; i < 3; ++i) {
            // The optimality is in the A^{-1/2}-weighted norm; compare in that norm.
            const Vector diff = p.oracle.isqrt_apply(s.col(i) - ref.col(i));
            const double e = diff.norm() / p.oracle.isqrt_apply(ref.col(i)).norm();
            EXPECT_LE(e, prev(i) + 1e-10) << "t=" << t;
            prev(i) = e;
        }
    }
}

TEST(Sqrt, ClosedFormMatchesIntegral)
{
    // (2/pi) int_0^inf A Q (T + z^2)^{-1} E_1 R dz against the closed form.
    SeededRng rng(4);
    const TestProblem p = make_problem(SpectrumSpec::fastdecay(80, 0.9), rng);
    DenseOperator op(p.a);
    const auto dec = block_lanczos(op, gaussian_matrix(80, 4, rng), 10);
    const Matrix closed = dec.q * isqrt_coefficients(dec).y;
    const Index n = dec.basis_size();
    Matrix e1r = Matrix::Zero(n, 4);
    e1r.topRows(4) = dec.r;
    Matrix integral = Matrix::Zero(n, 4);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < 4; ++j) {
            // substitute z = tan(u) to map [0, inf) onto [0, pi/2)
            auto f = [&](double u) {
                const double z = std::tan(u);
                const double jac = 1.0 + z * z;
                Matrix shifted = dec.t;
                shifted.diagonal().array() += z * z;
                return shifted.llt().solve(e1r.col(j))(i) * jac;
            };
            integral(i, j) = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, std::numbers::pi / 2, 12, 1e-10);
        }
    }
    integral *= 2.0 / std::numbers::pi;
    const Matrix quad = dec.q * integral;
    EXPECT_LE((quad - closed).norm(), 1e-6 * closed.norm());
}

TEST(ScalarIntegral, MatchesSqrt)
{
    EXPECT_NEAR(scalar_sqrt_integral(4.0), 2.0, 1e-8);
    EXPECT_NEAR(scalar_sqrt_integral(1.0), 1.0, 1e-8);
    EXPECT_NEAR(scalar_sqrt_integral(1e-6), 1e-3, 1e-8 * 1e-3);
    EXPECT_NEAR(scalar_sqrt_integral(1e6), 1e3, 1e-8 * 1e3);
    EXPECT_THROW(scalar_sqrt_integral(0.0), DimensionError);
}

TEST(EllipticK, KnownValues)
{
    EXPECT_NEAR(elliptic_K(0.0), std::numbers::pi / 2, 1e-15);
    EXPECT_NEAR(elliptic_K(0.5), 1.854074677301372, 1e-9);
    EXPECT_NEAR(elliptic_K_quadrature(0.5), 1.854074677301372, 1e-9);
    EXPECT_THROW(elliptic_K(1.0), DimensionError);
    EXPECT_THROW(elliptic_K(2.0), DimensionError);
}

TEST(EllipticK, AgmMatchesQuadratureForNegativeParameter)
{
    for (double m : {-0.01, -1.0, -10.0, -1e3, -1e6}) {
        EXPECT_NEAR(elliptic_K(m), elliptic_K_quadrature(m), 1e-9 * elliptic_K(m)) << m;
    }
}

TEST(EllipticK, InequalityAtTwo)
{
    const double lhs = std::sqrt(2.0) * elliptic_K(-1.0);
    const double rhs = 0.625 * std::log(32.0);
    EXPECT_NEAR(lhs, 1.854, 1e-3);
    EXPECT_NEAR(rhs, 2.166, 1e-3);
    EXPECT_LT(lhs, rhs);
}

TEST(SqrtBound, ConstantsAndRank)
{
    EXPECT_DOUBLE_EQ(sqrt_error_constant(1.0), 0.5 * std::log(16.0));
    EXPECT_THROW(sqrt_error_constant(0.5), DimensionError);
    EXPECT_EQ(sampling_deflation_rank(10, 0.1), 7);
    EXPECT_EQ(sampling_deflation_rank(3, 0.1), 0);
    EXPECT_EQ(sampling_deflation_rank(2000, 0.1), 664);
}
