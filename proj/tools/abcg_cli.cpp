// abcg: generate test matrices and run block-CG / Nystrom-PCG experiments.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numerical failure
// (including any method that failed inside an experiment).

#include "abcg/chunked.hpp"
#include "abcg/harness/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace abcg;
using namespace abcg::harness;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Options {
    std::string config;
    std::string preset = "fastdecay";
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string matrix;
    Index chunk_rows = 0;
    std::string spectrum_out;
    std::string samples_out;
    std::string bounds_out;
};

ExperimentConfig load_config(const Options& o)
{
    ExperimentConfig c = preset(o.preset);
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) {
            throw FormatError("cannot open config file " + o.config);
        }
        c = parse_config(in, c);
    }
    if (o.seed) {
        c.seed = *o.seed;
    }
    return c;
}

ProblemContext load_problem(const Options& o, const ExperimentConfig& c)
{
    return o.matrix.empty() ? ProblemContext::generate(c) : ProblemContext::from_file(o.matrix);
}

/// Writes to `path`, or stdout when empty.
template <class Fn>
void with_output(const std::string& path, Fn&& fn, bool binary = false)
{
    if (path.empty()) {
        fn(std::cout);
        return;
    }
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) {
        throw FormatError("cannot write " + path);
    }
    fn(out);
    if (!out) {
        throw FormatError("write to " + path + " failed");
    }
}

int finish(const RunOutput& run)
{
    for (const auto& f : run.failures) {
        std::cerr << "abcg: method failed: " << f << '\n';
    }
    return run.failures.empty() ? 0 : kExitNumerical;
}

int gen_matrix(const Options& o)
{
    const auto c = load_config(o);
    if (o.out.empty()) {
        throw FormatError("gen-matrix needs --out PATH");
    }
    const auto ctx = ProblemContext::generate(c);
    const Index d = ctx.dim();
    const Index chunk = o.chunk_rows > 0 ? o.chunk_rows : (d + 7) / 8;
    write_chunked(*ctx.problem()->a, chunk, o.out);
    if (!o.spectrum_out.empty()) {
        with_output(o.spectrum_out, [&](std::ostream& s) { write_spectrum(s, c.spectrum); });
    }
    std::cerr << "abcg: wrote " << d << "x" << d << " matrix in " << chunk_layout(d, chunk).size() << " chunks to " << o.out << '\n';
    return 0;
}

int trace_command(const Options& o, bool regpath)
{
    const auto c = load_config(o);
    const auto ctx = load_problem(o, c);
    const auto run = regpath ? run_regpath(ctx, c) : run_comparison(ctx, c);
    with_output(o.out, [&](std::ostream& s) { write_trace(s, run.rows); });
    return finish(run);
}

int sample(const Options& o)
{
    const auto c = load_config(o);
    const auto ctx = load_problem(o, c);
    const auto result = run_sampling(ctx, c);
    with_output(o.out, [&](std::ostream& s) { write_trace(s, result.run.rows); });
    if (!o.samples_out.empty() && result.samples.size() > 0) {
        with_output(o.samples_out, [&](std::ostream& s) { write_samples(s, result.samples); }, true);
    }
    return finish(result.run);
}

int diagnostics(const Options& o)
{
    const auto c = load_config(o);
    auto ctx = load_problem(o, c);
    const auto result = run_diagnostics(ctx, c);
    with_output(o.out, [&](std::ostream& s) { write_trace(s, result.run.rows); });
    if (!o.bounds_out.empty()) {
        with_output(o.bounds_out, [&](std::ostream& s) { write_bounds(s, result.bounds); });
    }
    return finish(result.run);
}

void common_flags(CLI::App* cmd, Options& o)
{
    cmd->add_option("--config", o.config, "INI configuration applied on top of the preset")->check(CLI::ExistingFile);
    std::string names;
    for (const auto& n : preset_names()) {
        names += (names.empty() ? "" : ", ") + n;
    }
    cmd->add_option("--preset", o.preset, "base preset (" + names + ")");
    cmd->add_option("--seed", o.seed, "override run.seed");
    cmd->add_option("--out", o.out, "output path (CSV; stdout when omitted)");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Augmented block-CG and Nystrom-PCG experiments"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("gen-matrix", "write a generated test matrix in chunked binary form");
    common_flags(gen, o);
    gen->add_option("--chunk-rows", o.chunk_rows, "rows per chunk (default: d/8 rounded up)")->check(CLI::PositiveNumber);
    gen->add_option("--spectrum-out", o.spectrum_out, "also write the eigenvalues as a one-column CSV");

    auto* compare = app.add_subcommand("compare", "error traces of every method on one problem");
    auto* regpath = app.add_subcommand("regpath", "traces over a regularization path, one decomposition per method");
    auto* sample_cmd = app.add_subcommand("sample", "Gaussian samples through block vs single-vector Lanczos");
    auto* diag = app.add_subcommand("diagnostics", "condition numbers of deflation preconditioners");
    for (auto* cmd : {compare, regpath, sample_cmd, diag}) {
        common_flags(cmd, o);
        cmd->add_option("--matrix", o.matrix, "chunked matrix file instead of a generated problem")->check(CLI::ExistingFile);
    }
    sample_cmd->add_option("--samples-out", o.samples_out, "write d x m float64 samples (column-major, little-endian)");
    diag->add_option("--bounds-out", o.bounds_out, "write kappa bounds, kappa_{r+1} and d_eff as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen->parsed()) {
            return gen_matrix(o);
        }
        if (compare->parsed()) {
            return trace_command(o, false);
        }
        if (regpath->parsed()) {
            return trace_command(o, true);
        }
        if (sample_cmd->parsed()) {
            return sample(o);
        }
        return diagnostics(o);
    } catch (const NumericalError& e) {
        std::cerr << "abcg: numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "abcg: " << e.what() << '\n';
        return kExitConfig;
    }
}
