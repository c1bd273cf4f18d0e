// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails.
//
//   acceptance                 all criteria
//   acceptance --criterion N   criterion N only

#include "abcg/chunked.hpp"
#include "abcg/harness/experiments.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <tuple>
#include <unistd.h>
#include <sstream>
#include <string>

using namespace abcg;
using namespace abcg::harness;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double min_eig(const Matrix& s)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(linalg::symmetrized(s), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

/// mu grid of criteria 3 and 4: {0, 1e-4, ..., 1} * lambda_1.
std::vector<double> kappa_grid(double lambda1)
{
    std::vector<double> g{0.0};
    for (double f : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
        g.push_back(f * lambda1);
    }
    return g;
}

double lambda_max_of(const SpectrumSpec& spec) { return make_eigenvalues(spec).front(); }

// 1. block-CG at t against Nystrom-PCG_s after t - s PCG steps.
Outcome criterion1()
{
    auto c = preset("fastdecay");
    c.l = 8;
    c.t_max = 60;
    c.mus = {0.0};
    c.methods = expand_methods({"bcg", "nystrom_pcg"}, {1, 3}, 10, {}, {});
    const auto out = run_comparison(ProblemContext::generate(c), c);
    if (!out.failures.empty()) {
        return {false, "method failure: " + out.failures.front()};
    }
    std::map<std::string, std::map<Index, double>> err;
    for (const auto& r : out.rows) {
        err[r.method][*r.t] = *r.rel_err_anorm;
    }
    const auto& bcg = err["bcg"];
    const Index t_bcg = bcg.rbegin()->first;
    Outcome o;
    double worst = 0.0;
    int checked = 0;
    for (Index s : {1, 3}) {
        const auto& pcg = err["nystrom_pcg_s" + std::to_string(s)];
        for (Index t = s; t <= 60; ++t) {
            // Past exhaustion of the block space the last block-CG iterate stands.
            const double eb = bcg.at(std::min(t, t_bcg));
            const double ep = pcg.at(t);
            ++checked;
            if (eb <= 1e-12) {
                continue;
            }
            worst = std::max(worst, eb / ep);
            if (eb > ep * (1 + 1e-6)) {
                o.pass = false;
                o.detail += " s=" + std::to_string(s) + ",t=" + std::to_string(t) + ": " + num(eb) + ">" + num(ep);
            }
        }
    }
    o.detail = std::to_string(checked) + " pairs, block-CG t<=" + std::to_string(t_bcg) + ", final bcg err " + num(bcg.rbegin()->second) +
               ", worst bcg/pcg above floor " + num(worst) + o.detail;
    return o;
}

// 2. exact top-r deflation rate.
Outcome criterion2()
{
    Outcome o;
    int checked = 0;
    for (const auto& spec : {SpectrumSpec::fastdecay(200), SpectrumSpec::fastdecay(200, 0.97)}) {
        auto c = preset("fastdecay");
        c.spectrum = spec;
        c.t_max = 400;
        const double lambda1 = lambda_max_of(spec);
        c.mus = {0.0, 1e-2 * lambda1};
        c.methods = expand_methods({"exact_pcg"}, {}, 10, {ThetaRule::Kind::lambda_min, 1.0}, {});
        const auto ctx = ProblemContext::generate(c);
        const auto out = run_comparison(ctx, c);
        if (!out.failures.empty()) {
            return {false, "method failure: " + out.failures.front()};
        }
        const auto& oracle = *ctx.oracle();
        for (const auto& r : out.rows) {
            if (*r.t == 0) {
                continue;
            }
            const double bound = 2.0 * std::exp(-2.0 * static_cast<double>(*r.t) / std::sqrt(oracle.kappa_deflated(10, *r.mu)));
            if (bound < 1e-12 || *r.rel_err_anorm < 1e-12) {
                continue;
            }
            ++checked;
            if (*r.rel_err_anorm > bound) {
                o.pass = false;
                o.detail += " mu=" + num(*r.mu) + ",t=" + std::to_string(*r.t) + ": " + num(*r.rel_err_anorm) + ">" + num(bound);
            }
        }
    }
    o.detail = std::to_string(checked) + " (t, mu) cells on two spectra" + o.detail;
    return o;
}

// 3. condition-number upper bound with the exact ||E||_2.
Outcome criterion3()
{
    Outcome o;
    int cells = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto c = preset("fastdecay");
        c.seed = seed;
        c.mus = kappa_grid(lambda_max_of(c.spectrum));
        c.diagnostics.l = {8, 12};
        c.diagnostics.s = {1, 3};
        c.diagnostics.theta = {};
        auto ctx = ProblemContext::generate(c);
        const auto out = run_diagnostics(ctx, c);
        if (!out.run.failures.empty()) {
            return {false, "failure: " + out.run.failures.front()};
        }
        for (const auto& b : out.bounds) {
            const bool wanted = (b.l == 8 && (b.s == 1 || b.s == 3)) || (b.l == 12 && b.s == 3);
            if (b.method.rfind("nystrom", 0) != 0 || !wanted) {
                continue;
            }
            ++cells;
            worst = std::max(worst, b.kappa_actual / *b.kappa_bound);
            if (b.kappa_actual > *b.kappa_bound * (1 + 1e-8)) {
                o.pass = false;
                o.detail += " seed=" + std::to_string(seed) + ",l=" + std::to_string(*b.l) + ",s=" + std::to_string(*b.s) +
                            ",mu=" + num(b.mu);
            }
        }
    }
    if (cells != 10 * 3 * 6) {
        o.pass = false;
    }
    o.detail = std::to_string(cells) + " cells, max kappa/bound " + num(worst) + o.detail;
    return o;
}

// 4. kappa_actual <= 28 kappa_{r+1}(mu) over the whole grid, per trial.
Outcome criterion4()
{
    const Index d = 200;
    const Index s = static_cast<Index>(std::ceil(2.0 + std::log(static_cast<double>(d)) / 2.0));
    int successes = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto c = preset("fastdecay");
        c.seed = seed;
        c.mus = kappa_grid(lambda_max_of(c.spectrum));
        c.diagnostics.l = {12};
        c.diagnostics.s = {s};
        c.diagnostics.r = 10;
        c.diagnostics.theta = {ThetaRule::Kind::lambda_min, 1.0};
        auto ctx = ProblemContext::generate(c);
        const auto out = run_diagnostics(ctx, c);
        bool ok = out.run.failures.empty();
        for (const auto& b : out.bounds) {
            if (b.method.rfind("nystrom", 0) == 0) {
                worst = std::max(worst, b.kappa_actual / *b.kappa_deflated);
                ok = ok && b.kappa_actual <= 28.0 * *b.kappa_deflated;
            }
        }
        successes += ok ? 1 : 0;
    }
    return {successes >= 18, std::to_string(successes) + "/20 trials (s=" + std::to_string(s) + "), max kappa/kappa_11 " + num(worst)};
}

// 5. one decomposition for 20 shifts against 20 dedicated runs.
Outcome criterion5()
{
    auto c = preset("fastdecay");
    c.l = 8;
    c.t_max = 20;
    const double lambda1 = lambda_max_of(c.spectrum);
    c.mus.clear();
    for (double f : ShiftGrid::logspace(1e-6, 1.0, 20)) {
        c.mus.push_back(f * lambda1);
    }
    c.methods = expand_methods({"bcg"}, {}, 10, {}, {});
    const auto ctx = ProblemContext::generate(c);
    const auto out = run_regpath(ctx, c);

    std::set<std::uint64_t> loads;
    for (const auto& r : out.rows) {
        if (*r.t == 20) {
            loads.insert(*r.matrix_loads);
        }
    }

    const Index d = ctx.dim();
    Matrix start(d, 9);
    start.col(0) = experiments_detail::draw_rhs(c, d);
    start.rightCols(8) = experiments_detail::draw_sketch(c, d, 8);
    const auto op = ctx.make_operator();
    const auto dec = block_lanczos(*op, start, 20);
    const Matrix& a = *ctx.problem()->a;
    double worst = 0.0;
    for (double mu : c.mus) {
        const Vector x = evaluate_bcg_iterate(dec, mu, 0);
        const auto base = ctx.make_operator();
        ShiftedOperator shifted(*base, mu);
        const Vector ref = evaluate_bcg_iterate(block_lanczos(shifted, start, 20), 0.0, 0);
        const Vector diff = x - ref;
        const double num_ = std::sqrt(diff.dot(a * diff) + mu * diff.squaredNorm());
        const double den = std::sqrt(ref.dot(a * ref) + mu * ref.squaredNorm());
        worst = std::max(worst, num_ / den);
    }
    const bool pass = worst <= 1e-8 && loads.size() == 1 && out.failures.empty();
    return {pass, "20 shifts, max relative A_mu-norm difference " + num(worst) + ", distinct block-CG load counts at t=20: " +
                      std::to_string(loads.size()) + (loads.empty() ? "" : " (" + std::to_string(*loads.begin()) + ")")};
}

// 6. load accounting of block Lanczos and the Nystrom build.
Outcome criterion6()
{
    SeededRng rng(6);
    const TestProblem p = make_problem(SpectrumSpec::fastdecay(200), rng);
    const Index m = 8;
    const Matrix b = gaussian_matrix(200, m, rng);
    Outcome o;
    std::string lanczos;
    for (Index t : {2, 5, 10, 20}) {
        DenseOperator op(p.a);
        block_lanczos(op, b, t);
        const CostCounters want{static_cast<std::uint64_t>(t - 1), static_cast<std::uint64_t>((t - 1) * m)};
        if (!(op.counters() == want)) {
            o.pass = false;
        }
        lanczos += " t=" + std::to_string(t) + ":" + std::to_string(op.counters().matrix_loads) + "/" + std::to_string(t - 1);
    }
    bool nystrom_ok = true;
    for (Index s : {1, 2, 3, 5}) {
        DenseOperator op(p.a);
        nystrom_block_krylov(op, b, s);
        nystrom_ok = nystrom_ok && op.counters() == (CostCounters{static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(s * m)});
    }
    o.pass = o.pass && nystrom_ok;
    o.detail = "Lanczos loads got/want" + lanczos + "; Nystrom s loads " + (nystrom_ok ? "exact" : "WRONG");
    return o;
}

// 7. sampling: exhaustion, inverse consistency, sampling bound.
Outcome criterion7()
{
    Outcome o;
    double exhaust = 0.0;
    for (auto [d, m, t] : {std::tuple<Index, Index, Index>{100, 10, 10}, {60, 6, 10}, {50, 5, 10}, {90, 9, 10}}) {
        SeededRng rng(static_cast<std::uint64_t>(d));
        const TestProblem p = make_problem(SpectrumSpec::fastdecay(d, 0.9), rng);
        DenseOperator op(p.a);
        const Matrix b = gaussian_matrix(d, m, rng);
        const Matrix ref = p.oracle.sqrt_apply(b);
        exhaust = std::max(exhaust, (block_sqrt_apply(block_lanczos(op, b, t), op) - ref).norm() / ref.norm());
    }
    const bool a_ok = exhaust <= 1e-8;

    auto c = preset("outliers20");
    c.sampling.m = 10;
    c.sampling.t_max = 30;
    const auto run = run_sampling(ProblemContext::generate(c), c);
    double iso = std::numeric_limits<double>::infinity();
    for (const auto& r : run.run.rows) {
        if (r.method == "isqrt_consistency") {
            iso = *r.residual_norm;
        }
    }
    const bool b_ok = iso <= 1e-10 && run.run.failures.empty();

    // Normalized error ||A^{1/2} b - y|| / (||A^{1/2}|| ||b||) at every t.
    const Index d = 300;
    const Index m = 10;
    const Index r = sampling_deflation_rank(m, 0.1);
    int successes = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SeededRng rng(seed, kStreamMatrix);
        const TestProblem p = make_problem(SpectrumSpec::outliers(d, 20, 10.0), rng);
        SeededRng brng(seed, kStreamSamples);
        const Matrix b = gaussian_matrix(d, m, brng);
        const Matrix ref = p.oracle.sqrt_apply(b);
        DenseOperator op(p.a);
        DenseOperator scratch(p.a);
        const auto dec = block_lanczos(op, b, d / m);
        const double kappa = p.oracle.kappa(0.0);
        const double kr = p.oracle.kappa_deflated(r, 0.0);
        bool ok = true;
        for (Index t = 1; t <= dec.iterations; ++t) {
            const Matrix y = block_sqrt_apply(dec.prefix(t), scratch);
            const double bound = sqrt_error_bound(kappa, kr, t, d);
            for (Index i = 0; i < m; ++i) {
                const double e = (y.col(i) - ref.col(i)).norm() / (std::sqrt(p.oracle.lambda_max()) * b.col(i).norm());
                worst = std::max(worst, e / bound);
                ok = ok && e <= bound;
            }
        }
        successes += ok ? 1 : 0;
    }
    const bool c_ok = successes >= 18;
    o.pass = a_ok && b_ok && c_ok;
    o.detail = "(a) exhaustion err " + num(exhaust) + (a_ok ? " ok" : " FAIL") + "; (b) isqrt consistency " + num(iso) +
               (b_ok ? " ok" : " FAIL") + "; (c) r=" + std::to_string(r) + ", " + std::to_string(successes) +
               "/20 trials within bound, max err/bound " + num(worst) + (c_ok ? " ok" : " FAIL");
    return o;
}

// 8. sqrt(x) K(1 - x) < (5/8) log(16 x).
Outcome criterion8()
{
    Outcome o;
    double max_ratio = 0.0;
    double max_gap = 0.0;
    const double lo = std::log(1.01);
    const double hi = std::log(1e6);
    for (int i = 0; i < 50; ++i) {
        const double x = std::exp(lo + (hi - lo) * i / 49.0);
        const double k = elliptic_K(1.0 - x);
        const double kq = elliptic_K_quadrature(1.0 - x);
        max_gap = std::max(max_gap, std::abs(k - kq) / k);
        const double lhs = std::sqrt(x) * k;
        const double rhs = 0.625 * std::log(16.0 * x);
        max_ratio = std::max(max_ratio, lhs / rhs);
        if (!(lhs < rhs)) {
            o.pass = false;
        }
    }
    o.pass = o.pass && max_gap <= 1e-9;
    o.detail = "50 points, max lhs/rhs " + num(max_ratio) + ", AGM vs quadrature max relative gap " + num(max_gap);
    return o;
}

// 9. PSD sandwich and depth monotonicity of the Nystrom error.
Outcome criterion9()
{
    Outcome o;
    double low = 0.0;
    int violations = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SeededRng rng(seed, kStreamMatrix);
        const TestProblem p = make_problem(SpectrumSpec::fastdecay(200), rng);
        SeededRng srng(seed, kStreamSketch);
        const Matrix omega = gaussian_matrix(200, 10, srng);
        const double anorm = p.oracle.lambda_max();
        double prev = std::numeric_limits<double>::infinity();
        for (Index s = 1; s <= 3; ++s) {
            DenseOperator op(p.a);
            const auto approx = nystrom_block_krylov(op, omega, s);
            const Matrix hat = approx.dense();
            const Matrix e = *p.a - hat;
            low = std::min({low, min_eig(e) / anorm, min_eig(hat) / anorm});
            const double err = linalg::symmetric_norm(e);
            if (err > prev) {
                ++violations;
            }
            prev = err;
        }
    }
    o.pass = low >= -1e-8 && violations == 0;
    o.detail = "5 seeds x s=1..3, min eigenvalue / ||A|| " + num(low) + ", monotonicity violations " + std::to_string(violations);
    return o;
}

// 10. chunked storage against the dense product, and file round trips.
Outcome criterion10()
{
    Outcome o;
    SeededRng rng(10);
    const auto dir = std::filesystem::temp_directory_path() / ("abcg_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    double worst = 0.0;
    int mismatches = 0;
    for (int k = 0; k < 20; ++k) {
        const Index d = 1 + static_cast<Index>(rng.uniform() * 300);
        const Index chunk = 1 + static_cast<Index>(rng.uniform() * static_cast<double>(d));
        const Index n = 1 + static_cast<Index>(rng.uniform() * 10);
        const Matrix g = gaussian_matrix(d, d, rng);
        const Matrix a = linalg::symmetrized(g + g.transpose());
        const auto path = dir / ("m" + std::to_string(k) + ".bin");
        write_chunked(a, chunk, path);
        ChunkedOperator op(path);
        const Matrix x = gaussian_matrix(d, n, rng);
        const Matrix dense = a * x;
        worst = std::max(worst, (op.apply_block(x) - dense).norm() / dense.norm());
        const Matrix back = op.to_dense();
        if (back.rows() != d || std::memcmp(back.data(), a.data(), sizeof(double) * static_cast<std::size_t>(d * d)) != 0) {
            ++mismatches;
        }
        const auto again = dir / ("m" + std::to_string(k) + "b.bin");
        write_chunked(back, op.chunk_rows(), again);
        std::ifstream f1(path, std::ios::binary);
        std::ifstream f2(again, std::ios::binary);
        const std::string b1((std::istreambuf_iterator<char>(f1)), {});
        const std::string b2((std::istreambuf_iterator<char>(f2)), {});
        if (b1 != b2) {
            ++mismatches;
        }
    }
    std::filesystem::remove_all(dir);
    o.pass = worst <= 1e-12 && mismatches == 0;
    o.detail = "20 triples, max relative apply error " + num(worst) + ", round-trip mismatches " + std::to_string(mismatches);
    return o;
}

const std::map<int, std::pair<std::string, std::function<Outcome()>>>& criteria()
{
    static const std::map<int, std::pair<std::string, std::function<Outcome()>>> all = {
        {1, {"block-CG dominates Nystrom-PCG", criterion1}},
        {2, {"exact-deflation PCG rate", criterion2}},
        {3, {"preconditioned condition number bound", criterion3}},
        {4, {"condition number within 28 kappa_{r+1}", criterion4}},
        {5, {"shift invariance over a regularization path", criterion5}},
        {6, {"matrix-load accounting", criterion6}},
        {7, {"matrix square root sampling", criterion7}},
        {8, {"elliptic integral inequality", criterion8}},
        {9, {"Nystrom PSD sandwich and depth monotonicity", criterion9}},
        {10, {"chunked operator fidelity", criterion10}},
    };
    return all;
}

} // namespace

int main(int argc, char** argv)
{
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            selected.push_back(std::atoi(argv[++i]));
        } else {
            std::fprintf(stderr, "usage: %s [--criterion N]...\n", argv[0]);
            return 2;
        }
    }
    if (selected.empty()) {
        for (const auto& [n, _] : criteria()) {
            selected.push_back(n);
        }
    }
    int failed = 0;
    for (int n : selected) {
        const auto it = criteria().find(n);
        if (it == criteria().end()) {
            std::fprintf(stderr, "no criterion %d\n", n);
            return 2;
        }
        Outcome o;
        try {
            o = it->second.second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %d %s: %s | %s\n", n, o.pass ? "PASS" : "FAIL", it->second.first.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
