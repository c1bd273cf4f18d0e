#pragma once

// Out-of-core symmetric matrix stored as horizontal chunks of rows.
//
// File layout (all little-endian):
//   bytes 0..7    magic "BKSPD1\0\0"
//   bytes 8..15   u64 d
//   bytes 16..23  u64 chunk_rows
//   then ceil(d / chunk_rows) chunks, each rows x d float64 in row-major
//   order; every chunk has chunk_rows rows except possibly the last.

#include "abcg/operator.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace abcg {

namespace chunked_detail {

inline constexpr std::array<char, 8> kMagic = {'B', 'K', 'S', 'P', 'D', '1', '\0', '\0'};
inline constexpr std::uint64_t kHeaderBytes = 24;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T to_little(T v)
{
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    } else {
        return v;
    }
}

inline void put_u64(std::ostream& out, std::uint64_t v)
{
    v = to_little(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint64_t get_u64(const char* p)
{
    std::uint64_t v;
    std::memcpy(&v, p, sizeof(v));
    return to_little(v);
}

} // namespace chunked_detail

/// Number of rows in each chunk of a d x d matrix split into chunk_rows-row pieces.
inline std::vector<Index> chunk_layout(Index d, Index chunk_rows)
{
    if (d < 1 || chunk_rows < 1) {
        throw DimensionError("chunk layout needs d >= 1 and chunk_rows >= 1");
    }
    std::vector<Index> rows;
    for (Index r0 = 0; r0 < d; r0 += chunk_rows) {
        rows.push_back(std::min(chunk_rows, d - r0));
    }
    return rows;
}

/// Writes a symmetric matrix to the chunked format. Symmetry is checked once
/// here (relative Frobenius tolerance 1e-12); readers trust it.
inline void write_chunked(const Matrix& a, Index chunk_rows, const std::filesystem::path& path)
{
    using namespace chunked_detail;
    if (a.rows() != a.cols()) {
        throw DimensionError("write_chunked: matrix must be square, got " + shape_string(a.rows(), a.cols()));
    }
    const auto layout = chunk_layout(a.rows(), chunk_rows);
    const double scale = a.norm();
    if (!a.allFinite() || (a - a.transpose()).norm() > 1e-12 * scale) {
        throw DimensionError("write_chunked: matrix is not symmetric to 1e-12 relative");
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("write_chunked: cannot open " + path.string());
    }
    out.write(kMagic.data(), kMagic.size());
    put_u64(out, static_cast<std::uint64_t>(a.rows()));
    put_u64(out, static_cast<std::uint64_t>(chunk_rows));

    std::vector<double> row(static_cast<std::size_t>(a.cols()));
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) {
            row[static_cast<std::size_t>(j)] = to_little(a(i, j));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!out) {
        throw FormatError("write_chunked: write failed for " + path.string());
    }
}

/// Operator that streams its matrix from a chunked file, holding one chunk
/// in memory at a time. Each chunk contributes its rows of the product.
class ChunkedOperator final : public SymmetricOperator {
public:
    struct Header {
        Index dim;
        Index chunk_rows;
    };

    explicit ChunkedOperator(const std::filesystem::path& path) : ChunkedOperator(read_header(path), path) {}

    const std::filesystem::path& path() const { return path_; }
    Index chunk_rows() const { return chunk_rows_; }
    Index num_chunks() const { return static_cast<Index>(layout_.size()); }
    const std::vector<Index>& layout() const { return layout_; }

    /// Reads chunk c into a rows x d matrix.
    Matrix read_chunk(Index c) const
    {
        std::ifstream in(path_, std::ios::binary);
        if (!in) {
            throw FormatError("chunked matrix: cannot reopen " + path_.string());
        }
        return read_chunk(in, c);
    }

    /// The whole stored matrix; for tests and small problems.
    Matrix to_dense() const
    {
        std::ifstream in(path_, std::ios::binary);
        Matrix a(dim(), dim());
        Index r0 = 0;
        for (Index c = 0; c < num_chunks(); ++c) {
            a.middleRows(r0, layout_[c]) = read_chunk(in, c);
            r0 += layout_[c];
        }
        return a;
    }

    static Header read_header(const std::filesystem::path& path)
    {
        using namespace chunked_detail;
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) {
            throw FormatError("chunked matrix: cannot open " + path.string());
        }
        const auto size = static_cast<std::uint64_t>(in.tellg());
        if (size < kHeaderBytes) {
            throw FormatError("chunked matrix: file truncated at byte offset " + std::to_string(size) +
                              " inside the 24-byte header");
        }
        in.seekg(0);
        std::array<char, kHeaderBytes> head{};
        in.read(head.data(), head.size());
        if (std::memcmp(head.data(), kMagic.data(), kMagic.size()) != 0) {
            throw FormatError("chunked matrix: bad magic bytes in " + path.string());
        }
        const std::uint64_t d = get_u64(head.data() + 8);
        const std::uint64_t rows = get_u64(head.data() + 16);
        if (d == 0 || rows == 0 || d > (std::uint64_t{1} << 31)) {
            throw FormatError("chunked matrix: corrupted header (d=" + std::to_string(d) +
                              ", chunk_rows=" + std::to_string(rows) + ")");
        }
        const std::uint64_t expected = kHeaderBytes + d * d * sizeof(double);
        if (size < expected) {
            throw FormatError("chunked matrix: file truncated at byte offset " + std::to_string(size) + ", expected " +
                              std::to_string(expected) + " bytes");
        }
        if (size > expected) {
            throw FormatError("chunked matrix: " + std::to_string(size - expected) +
                              " trailing bytes after offset " + std::to_string(expected));
        }
        return {static_cast<Index>(d), static_cast<Index>(rows)};
    }

protected:
    void multiply(const Matrix& x, Matrix& y) const override
    {
        std::ifstream in(path_, std::ios::binary);
        if (!in) {
            throw FormatError("chunked matrix: cannot reopen " + path_.string());
        }
        Index r0 = 0;
        for (Index c = 0; c < num_chunks(); ++c) {
            const Matrix chunk = read_chunk(in, c);
            y.middleRows(r0, layout_[c]).noalias() = chunk * x;
            r0 += layout_[c];
        }
    }

private:
    ChunkedOperator(Header h, std::filesystem::path path)
        : SymmetricOperator(h.dim), path_(std::move(path)), chunk_rows_(h.chunk_rows), layout_(chunk_layout(h.dim, h.chunk_rows))
    {
    }

    Matrix read_chunk(std::ifstream& in, Index c) const
    {
        using namespace chunked_detail;
        const Index d = dim();
        const Index rows = layout_.at(static_cast<std::size_t>(c));
        const std::uint64_t offset = kHeaderBytes + static_cast<std::uint64_t>(c * chunk_rows_ * d) * sizeof(double);
        std::vector<double> buf(static_cast<std::size_t>(rows * d));
        in.seekg(static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(double))) {
            throw FormatError("chunked matrix: short read of chunk " + std::to_string(c) + " at byte offset " +
                              std::to_string(offset + static_cast<std::uint64_t>(in.gcount())));
        }
        if constexpr (std::endian::native == std::endian::big) {
            for (auto& v : buf) {
                v = to_little(v);
            }
        }
        return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(buf.data(), rows, d);
    }

    std::filesystem::path path_;
    Index chunk_rows_;
    std::vector<Index> layout_;
};

inline std::unique_ptr<ChunkedOperator> open_chunked(const std::filesystem::path& path)
{
    return std::make_unique<ChunkedOperator>(path);
}

} // namespace abcg
