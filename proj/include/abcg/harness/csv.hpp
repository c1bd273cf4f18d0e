#pragma once

// CSV records written by the experiment runners.
//
// Trace schema (every subcommand):
//   experiment,method,s,l,t,matrix_loads,matvecs,mu,rel_err_anorm,residual_norm,kappa_actual,seed
// Bounds schema (diagnostics only):
//   experiment,method,s,l,mu,kappa_actual,kappa_bound,kappa_deflated,d_eff,seed
//
// Missing values are empty fields; floats use 17 significant digits.

#include "abcg/types.hpp"

#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace abcg::harness {

inline constexpr const char* kTraceHeader =
    "experiment,method,s,l,t,matrix_loads,matvecs,mu,rel_err_anorm,residual_norm,kappa_actual,seed";
inline constexpr const char* kBoundsHeader = "experiment,method,s,l,mu,kappa_actual,kappa_bound,kappa_deflated,d_eff,seed";

struct ExperimentRow {
    std::string experiment;
    std::string method;
    std::optional<Index> s;
    std::optional<Index> l;
    std::optional<Index> t;
    std::optional<std::uint64_t> matrix_loads;
    std::optional<std::uint64_t> matvecs;
    std::optional<double> mu;
    std::optional<double> rel_err_anorm;
    std::optional<double> residual_norm;
    std::optional<double> kappa_actual;
    std::uint64_t seed = 0;
};

struct BoundsRow {
    std::string experiment;
    std::string method;
    std::optional<Index> s;
    std::optional<Index> l;
    double mu = 0.0;
    double kappa_actual = 0.0;
    std::optional<double> kappa_bound;
    std::optional<double> kappa_deflated;
    double d_eff = 0.0;
    std::uint64_t seed = 0;
};

namespace csv_detail {

inline std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
std::string field(const std::optional<T>& v)
{
    if (!v) {
        return "";
    }
    if constexpr (std::is_floating_point_v<T>) {
        return fmt(*v);
    } else {
        return std::to_string(*v);
    }
}

inline std::string text(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    }
    return out + "\"";
}

} // namespace csv_detail

inline void write_trace(std::ostream& out, const std::vector<ExperimentRow>& rows)
{
    using namespace csv_detail;
    out << kTraceHeader << '\n';
    for (const auto& r : rows) {
        out << text(r.experiment) << ',' << text(r.method) << ',' << field(r.s) << ',' << field(r.l) << ',' << field(r.t) << ','
            << field(r.matrix_loads) << ',' << field(r.matvecs) << ',' << field(r.mu) << ',' << field(r.rel_err_anorm) << ','
            << field(r.residual_norm) << ',' << field(r.kappa_actual) << ',' << r.seed << '\n';
    }
}

inline void write_bounds(std::ostream& out, const std::vector<BoundsRow>& rows)
{
    using namespace csv_detail;
    out << kBoundsHeader << '\n';
    for (const auto& r : rows) {
        out << text(r.experiment) << ',' << text(r.method) << ',' << field(r.s) << ',' << field(r.l) << ',' << fmt(r.mu) << ','
            << fmt(r.kappa_actual) << ',' << field(r.kappa_bound) << ',' << field(r.kappa_deflated) << ',' << fmt(r.d_eff) << ','
            << r.seed << '\n';
    }
}

/// Header-keyed view of a CSV file, for reading traces back.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        throw FormatError("csv: missing column '" + name + "'");
    }

    const std::string& at(std::size_t row, const std::string& name) const { return rows.at(row).at(column(name)); }
};

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline CsvTable read_csv(std::istream& in)
{
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("csv: empty input");
    }
    t.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != t.header.size()) {
            throw FormatError("csv: row " + std::to_string(t.rows.size() + 1) + " has " + std::to_string(fields.size()) +
                              " fields, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    return t;
}

} // namespace abcg::harness
