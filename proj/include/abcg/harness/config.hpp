#pragma once

// Experiment configuration: INI-style text ([section] headers, key = value),
// named presets, and validation. Unknown sections or keys are errors.
//
//   [problem]     kind dim rate count gap scale values
//   [run]         experiment seed t_max mu mu_logspace mu_with_zero reorth
//   [methods]     list l s theta theta_factors r
//   [sampling]    m t_max mean
//   [diagnostics] l s r theta

#include "abcg/block_lanczos.hpp"
#include "abcg/matgen.hpp"
#include "abcg/solvers.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace abcg::harness {

enum class MethodKind { bcg, cg, nystrom_pcg, exact_pcg };

/// How theta is chosen for a deflation preconditioner.
struct ThetaRule {
    enum class Kind { automatic, lambda_min, fixed };
    Kind kind = Kind::automatic;
    double value = 1.0;  // fixed value, or factor applied to the automatic / lambda_min choice

    std::string describe() const
    {
        std::ostringstream os;
        switch (kind) {
        case Kind::automatic: os << "auto"; break;
        case Kind::lambda_min: os << "lambda_d"; break;
        case Kind::fixed: os << value; return os.str();
        }
        if (value != 1.0) {
            os << "*" << value;
        }
        return os.str();
    }
};

struct MethodSpec {
    MethodKind kind = MethodKind::bcg;
    Index s = 0;  // Nystrom depth
    Index r = 0;  // exact deflation rank
    ThetaRule theta;
    std::string label;  // CSV method column
};

struct SamplingConfig {
    Index m = 10;
    Index t_max = 30;
    double mean = 0.0;
};

struct DiagnosticsConfig {
    std::vector<Index> l{8, 12};
    std::vector<Index> s{1, 3};
    Index r = 10;
    ThetaRule theta;
};

struct ExperimentConfig {
    std::string experiment = "experiment";
    std::string problem_kind = "fastdecay";
    SpectrumSpec spectrum = SpectrumSpec::fastdecay(200);
    std::uint64_t seed = 0;
    Index t_max = 60;
    std::vector<double> mus{0.0};
    std::string reorth = "full";
    Index l = 8;
    std::vector<MethodSpec> methods;
    SamplingConfig sampling;
    DiagnosticsConfig diagnostics;

    Index dim() const { return spectrum.dim; }

    /// Policy for a method whose Nystrom build uses depth s ("partial" alone
    /// keeps the first s*l iterations).
    ReorthPolicy policy_for(Index s) const
    {
        if (reorth == "full") {
            return ReorthPolicy::full();
        }
        if (reorth == "none") {
            return ReorthPolicy::none();
        }
        if (reorth == "partial") {
            return ReorthPolicy::partial(std::max<Index>(1, s * l));
        }
        return ReorthPolicy::partial(std::stoll(reorth.substr(reorth.find(':') + 1)));
    }
};

namespace config_detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep = ',')
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(x)) {
            throw std::invalid_argument(v);
        }
        return x;
    } catch (const std::exception&) {
        throw FormatError("config: " + key + " = '" + v + "' is not a finite number");
    }
}

inline long long to_int(const std::string& key, const std::string& v)
{
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) {
            throw std::invalid_argument(v);
        }
        return x;
    } catch (const std::exception&) {
        throw FormatError("config: " + key + " = '" + v + "' is not an integer");
    }
}

inline Index to_positive(const std::string& key, const std::string& v)
{
    const long long x = to_int(key, v);
    if (x < 1) {
        throw FormatError("config: " + key + " must be >= 1, got " + v);
    }
    return static_cast<Index>(x);
}

inline std::vector<Index> to_positive_list(const std::string& key, const std::string& v)
{
    std::vector<Index> out;
    for (const auto& item : split(v)) {
        out.push_back(to_positive(key, item));
    }
    if (out.empty()) {
        throw FormatError("config: " + key + " is empty");
    }
    return out;
}

inline std::vector<double> to_double_list(const std::string& key, const std::string& v)
{
    std::vector<double> out;
    for (const auto& item : split(v)) {
        out.push_back(to_double(key, item));
    }
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw FormatError("config: " + key + " = '" + v + "' is not a boolean");
}

inline ThetaRule to_theta(const std::string& v)
{
    ThetaRule rule;
    if (v == "auto") {
        rule.kind = ThetaRule::Kind::automatic;
    } else if (v == "lambda_d") {
        rule.kind = ThetaRule::Kind::lambda_min;
    } else {
        rule.kind = ThetaRule::Kind::fixed;
        rule.value = to_double("theta", v);
        if (!(rule.value > 0.0)) {
            throw FormatError("config: theta must be positive");
        }
    }
    return rule;
}

inline std::string fmt_factor(double f)
{
    std::ostringstream os;
    os << f;
    return os.str();
}

} // namespace config_detail

/// Method list from names plus shared depth/rank/theta settings.
inline std::vector<MethodSpec> expand_methods(const std::vector<std::string>& names, const std::vector<Index>& depths, Index r,
                                              ThetaRule theta, const std::vector<double>& theta_factors)
{
    std::vector<MethodSpec> out;
    for (const auto& name : names) {
        if (name == "bcg") {
            out.push_back({MethodKind::bcg, 0, 0, {}, "bcg"});
        } else if (name == "cg") {
            out.push_back({MethodKind::cg, 0, 0, {}, "cg"});
        } else if (name == "nystrom_pcg") {
            for (Index s : depths) {
                if (theta_factors.empty()) {
                    out.push_back({MethodKind::nystrom_pcg, s, 0, theta, "nystrom_pcg_s" + std::to_string(s)});
                    continue;
                }
                for (double f : theta_factors) {
                    ThetaRule scaled = theta;
                    scaled.value = theta.kind == ThetaRule::Kind::fixed ? theta.value * f : f;
                    out.push_back({MethodKind::nystrom_pcg, s, 0, scaled,
                                   "nystrom_pcg_s" + std::to_string(s) + "_theta" + config_detail::fmt_factor(f)});
                }
            }
        } else if (name == "exact_pcg") {
            ThetaRule th = theta.kind == ThetaRule::Kind::automatic ? ThetaRule{ThetaRule::Kind::lambda_min, 1.0} : theta;
            out.push_back({MethodKind::exact_pcg, 0, r, th, "exact_pcg_r" + std::to_string(r)});
        } else {
            throw FormatError("config: unknown method '" + name + "' (expected bcg, cg, nystrom_pcg, exact_pcg)");
        }
    }
    return out;
}

/// Checks cross-field constraints. `dim` overrides the generated dimension
/// when the matrix comes from a file.
inline void validate(const ExperimentConfig& c, std::optional<Index> dim = std::nullopt)
{
    if (!dim) {
        make_eigenvalues(c.spectrum);  // throws DimensionError on a bad spectrum
    }
    const Index d = dim.value_or(c.dim());
    if (c.t_max < 1) {
        throw FormatError("config: run.t_max must be >= 1");
    }
    if (c.mus.empty()) {
        throw FormatError("config: the mu grid is empty");
    }
    for (double mu : c.mus) {
        if (!(mu >= 0.0)) {
            throw FormatError("config: mu values must be nonnegative");
        }
    }
    if (c.l < 1 || c.l + 1 > d) {
        throw FormatError("config: methods.l must satisfy 1 <= l < d");
    }
    for (const auto& m : c.methods) {
        if (m.kind == MethodKind::nystrom_pcg && m.s * c.l > d) {
            throw FormatError("config: Nystrom depth s=" + std::to_string(m.s) + " with l=" + std::to_string(c.l) +
                              " exceeds d=" + std::to_string(d));
        }
        if (m.kind == MethodKind::exact_pcg && (m.r < 1 || m.r >= d)) {
            throw FormatError("config: exact deflation rank must satisfy 1 <= r < d");
        }
    }
    if (c.reorth != "full" && c.reorth != "none" && c.reorth != "partial") {
        if (c.reorth.rfind("partial:", 0) != 0) {
            throw FormatError("config: run.reorth must be full, none, partial or partial:k");
        }
        config_detail::to_positive("run.reorth", c.reorth.substr(8));
    }
    // sampling.t_max is clipped to d/m at run time.
    if (c.sampling.m < 2 || c.sampling.m > d || c.sampling.t_max < 1) {
        throw FormatError("config: sampling.m must satisfy 2 <= m <= d and t_max >= 1");
    }
    for (Index l : c.diagnostics.l) {
        for (Index s : c.diagnostics.s) {
            if (l * s > d) {
                throw FormatError("config: diagnostics l*s exceeds d");
            }
        }
    }
    if (c.diagnostics.r < 0 || c.diagnostics.r >= d) {
        throw FormatError("config: diagnostics.r must satisfy 0 <= r < d");
    }
}

/// Names accepted by preset().
inline std::vector<std::string> preset_names()
{
    return {"fastdecay", "outliers20", "bottom20", "identity", "theta-grid"};
}

inline ExperimentConfig preset(const std::string& name)
{
    ExperimentConfig c;
    c.experiment = name;
    c.methods = expand_methods({"bcg", "cg", "nystrom_pcg"}, {1, 3}, 10, {}, {});
    if (name == "fastdecay") {
        c.spectrum = SpectrumSpec::fastdecay(200);
    } else if (name == "outliers20") {
        c.problem_kind = "outliers";
        c.spectrum = SpectrumSpec::outliers(200, 20, 10.0);
    } else if (name == "bottom20") {
        c.problem_kind = "bottom";
        c.spectrum = SpectrumSpec::bottom(200, 20, 10.0);
    } else if (name == "identity") {
        c.problem_kind = "identity";
        c.spectrum = SpectrumSpec::from_values(std::vector<double>(50, 1.0));
        c.t_max = 5;
        c.sampling.t_max = 2;
        c.sampling.m = 4;
        c.diagnostics.l = {4};
        c.diagnostics.s = {1};
        c.diagnostics.r = 2;
    } else if (name == "theta-grid") {
        c.spectrum = SpectrumSpec::fastdecay(200);
        c.methods = expand_methods({"bcg", "nystrom_pcg"}, {1, 5, 11}, 10, {}, {0.01, 0.1, 1.0, 10.0, 100.0});
    } else {
        std::string all;
        for (const auto& n : preset_names()) {
            all += (all.empty() ? "" : ", ") + n;
        }
        throw FormatError("unknown preset '" + name + "' (available: " + all + ")");
    }
    return c;
}

/// Applies INI text on top of `base`. Every key must be known.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = preset("fastdecay"))
{
    using namespace config_detail;
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw FormatError(std::string("config: ") + e.what());
    }

    static const std::map<std::string, std::set<std::string>> known = {
        {"problem", {"kind", "dim", "rate", "count", "gap", "scale", "values"}},
        {"run", {"experiment", "seed", "t_max", "mu", "mu_logspace", "mu_with_zero", "reorth"}},
        {"methods", {"list", "l", "s", "theta", "theta_factors", "r"}},
        {"sampling", {"m", "t_max", "mean"}},
        {"diagnostics", {"l", "s", "r", "theta"}},
    };
    std::map<std::string, std::string> kv;
    for (const auto& [section, body] : tree) {
        const auto it = known.find(section);
        if (it == known.end()) {
            if (body.empty() && !body.data().empty()) {
                throw FormatError("config: key '" + section + "' must appear inside a [section]");
            }
            throw FormatError("config: unknown section [" + section + "]");
        }
        for (const auto& [key, value] : body) {
            if (!it->second.count(key)) {
                throw FormatError("config: unknown key '" + key + "' in [" + section + "]");
            }
            kv[section + "." + key] = trim(value.data());
        }
    }
    const auto get = [&](const std::string& k) -> std::optional<std::string> {
        const auto it = kv.find(k);
        return it == kv.end() ? std::nullopt : std::optional<std::string>(it->second);
    };

    ExperimentConfig c = std::move(base);
    // [problem]
    if (auto v = get("problem.kind")) {
        c.problem_kind = *v;
    }
    SpectrumSpec& sp = c.spectrum;
    Index dim = sp.dim;
    if (auto v = get("problem.dim")) {
        dim = to_positive("problem.dim", *v);
    }
    if (c.problem_kind == "fastdecay") {
        sp.kind = SpectrumKind::fastdecay;
    } else if (c.problem_kind == "outliers") {
        sp.kind = SpectrumKind::outliers;
    } else if (c.problem_kind == "bottom") {
        sp.kind = SpectrumKind::bottom;
    } else if (c.problem_kind == "identity") {
        sp = SpectrumSpec::from_values(std::vector<double>(static_cast<std::size_t>(dim), 1.0));
    } else if (c.problem_kind == "explicit") {
        sp.kind = SpectrumKind::explicit_values;
    } else {
        throw FormatError("config: problem.kind must be fastdecay, outliers, bottom, identity or explicit");
    }
    if (c.problem_kind != "identity") {
        sp.dim = dim;
    }
    if (sp.kind != SpectrumKind::explicit_values) {
        sp.values.clear();
    }
    if (auto v = get("problem.rate")) {
        sp.rate = to_double("problem.rate", *v);
    }
    if (auto v = get("problem.count")) {
        sp.count = to_positive("problem.count", *v);
    }
    if (auto v = get("problem.gap")) {
        sp.gap = to_double("problem.gap", *v);
    }
    if (auto v = get("problem.scale")) {
        sp.scale = to_double("problem.scale", *v);
    }
    if (auto v = get("problem.values")) {
        sp.values = to_double_list("problem.values", *v);
        sp.dim = static_cast<Index>(sp.values.size());
    }
    if (sp.kind == SpectrumKind::explicit_values && sp.values.empty()) {
        throw FormatError("config: problem.kind = explicit needs problem.values");
    }

    // [run]
    if (auto v = get("run.experiment")) {
        c.experiment = *v;
    }
    if (auto v = get("run.seed")) {
        const long long s = to_int("run.seed", *v);
        if (s < 0) {
            throw FormatError("config: run.seed must be nonnegative");
        }
        c.seed = static_cast<std::uint64_t>(s);
    }
    if (auto v = get("run.t_max")) {
        c.t_max = to_positive("run.t_max", *v);
    }
    if (auto v = get("run.reorth")) {
        c.reorth = *v;
    }
    const auto mu_list = get("run.mu");
    const auto mu_log = get("run.mu_logspace");
    if (mu_list || mu_log) {
        c.mus.clear();
        if (mu_list) {
            c.mus = to_double_list("run.mu", *mu_list);
        }
        if (mu_log) {
            const auto parts = split(*mu_log);
            if (parts.size() != 3) {
                throw FormatError("config: run.mu_logspace must be lo,hi,n");
            }
            const double lo = to_double("run.mu_logspace", parts[0]);
            const double hi = to_double("run.mu_logspace", parts[1]);
            const Index n = to_positive("run.mu_logspace", parts[2]);
            if (!(lo > 0.0) || hi < lo) {
                throw FormatError("config: run.mu_logspace needs 0 < lo <= hi");
            }
            for (double mu : ShiftGrid::logspace(lo, hi, n)) {
                c.mus.push_back(mu);
            }
        }
    }
    if (auto v = get("run.mu_with_zero"); v && to_bool("run.mu_with_zero", *v)) {
        if (std::find(c.mus.begin(), c.mus.end(), 0.0) == c.mus.end()) {
            c.mus.insert(c.mus.begin(), 0.0);
        }
    }
    std::sort(c.mus.begin(), c.mus.end());

    // [methods]
    if (auto v = get("methods.l")) {
        c.l = to_positive("methods.l", *v);
    }
    const bool method_keys = get("methods.list") || get("methods.s") || get("methods.theta") || get("methods.theta_factors") ||
                             get("methods.r");
    if (method_keys) {
        std::vector<std::string> names = split(get("methods.list").value_or("bcg,cg,nystrom_pcg"));
        if (names.empty()) {
            throw FormatError("config: methods.list is empty");
        }
        const std::vector<Index> depths = to_positive_list("methods.s", get("methods.s").value_or("1,3"));
        const Index r = to_positive("methods.r", get("methods.r").value_or("10"));
        const ThetaRule theta = to_theta(get("methods.theta").value_or("auto"));
        std::vector<double> factors;
        if (auto v = get("methods.theta_factors")) {
            factors = to_double_list("methods.theta_factors", *v);
        }
        c.methods = expand_methods(names, depths, r, theta, factors);
    }

    // [sampling]
    if (auto v = get("sampling.m")) {
        c.sampling.m = to_positive("sampling.m", *v);
    }
    if (auto v = get("sampling.t_max")) {
        c.sampling.t_max = to_positive("sampling.t_max", *v);
    }
    if (auto v = get("sampling.mean")) {
        c.sampling.mean = to_double("sampling.mean", *v);
    }

    // [diagnostics]
    if (auto v = get("diagnostics.l")) {
        c.diagnostics.l = to_positive_list("diagnostics.l", *v);
    }
    if (auto v = get("diagnostics.s")) {
        c.diagnostics.s = to_positive_list("diagnostics.s", *v);
    }
    if (auto v = get("diagnostics.r")) {
        c.diagnostics.r = to_int("diagnostics.r", *v);
    }
    if (auto v = get("diagnostics.theta")) {
        c.diagnostics.theta = to_theta(*v);
    }

    try {
        validate(c);
    } catch (const DimensionError& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = preset("fastdecay"))
{
    std::istringstream in(text);
    return parse_config(in, std::move(base));
}

} // namespace abcg::harness
