#pragma once

// EMB1: the binary container for embedding matrices.
//
//   offset  size  field
//   0       4     magic "MVEM"
//   4       4     version (u32 LE) = 1
//   8       4     rows    (u32 LE)
//   12      4     cols    (u32 LE)
//   16      4     dtype   (u32 LE), 1 = f32
//   20      4     reserved (u32 LE) = 0
//   24      ...   rows * cols f32 LE, row-major

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mvzero/error.hpp"

namespace mvzero {

inline constexpr std::array<char, 4> kEmbMagic = {'M', 'V', 'E', 'M'};
inline constexpr std::uint32_t kEmbVersion = 1;
inline constexpr std::uint32_t kEmbDtypeF32 = 1;
inline constexpr std::size_t kEmbHeaderSize = 24;

/// Rows whose Euclidean norm is below this are rejected by normalize_rows.
inline constexpr double kZeroNormThreshold = 1e-8;
/// Tolerance for the unit-norm invariant of a normalized matrix.
inline constexpr double kUnitNormTolerance = 1e-4;
/// Norm deviation attributable to f32 rounding of an exactly-unit row.
inline constexpr double kF32UnitSlack = 1e-6;

/// Dense row-major f32 matrix; the common currency for view and prompt
/// embeddings. Immutable once built.
class EmbeddingMatrix {
  public:
    EmbeddingMatrix() = default;

    EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<float> data,
                    bool normalized = false)
        : rows_(rows), cols_(cols), data_(std::move(data)), normalized_(normalized) {
        if (cols_ == 0) {
            throw Error(ErrorCode::DimMismatch, "embedding matrix needs cols >= 1");
        }
        if (data_.size() != rows_ * cols_) {
            throw Error(ErrorCode::DimMismatch,
                        "data length " + std::to_string(data_.size()) + " != rows*cols " +
                            std::to_string(rows_ * cols_));
        }
    }

    static EmbeddingMatrix from_rows(const std::vector<std::vector<float>>& rows,
                                     bool normalized = false) {
        if (rows.empty()) {
            throw Error(ErrorCode::DimMismatch, "from_rows needs at least one row");
        }
        const std::size_t cols = rows.front().size();
        std::vector<float> data;
        data.reserve(rows.size() * cols);
        for (const auto& r : rows) {
            if (r.size() != cols) {
                throw Error(ErrorCode::DimMismatch, "ragged rows");
            }
            data.insert(data.end(), r.begin(), r.end());
        }
        return EmbeddingMatrix(rows.size(), cols, std::move(data), normalized);
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool normalized() const noexcept { return normalized_; }

    std::span<const float> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }
    std::span<const float> data() const noexcept { return data_; }

    /// Bitwise equality of shape and payload (NaN payloads compare by bits).
    bool bitwise_equal(const EmbeddingMatrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_ &&
               (data_.empty() ||
                std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 1;
    std::vector<float> data_;
    bool normalized_ = false;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                           static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(bytes, 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline double row_norm(std::span<const float> r) {
    double acc = 0.0;
    for (float x : r) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

}  // namespace detail

inline void write_embeddings(const EmbeddingMatrix& m, std::ostream& out) {
    if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) {
        throw Error(ErrorCode::IoError, "matrix too large for EMB1 u32 header");
    }
    out.write(kEmbMagic.data(), 4);
    detail::put_u32(out, kEmbVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    detail::put_u32(out, kEmbDtypeF32);
    detail::put_u32(out, 0);
    for (float x : m.data()) {
        detail::put_u32(out, std::bit_cast<std::uint32_t>(x));
    }
    if (!out) {
        throw Error(ErrorCode::IoError, "write to embedding sink failed");
    }
}

/// Parses an EMB1 stream. The returned matrix is not normalized, and the
/// stream must end exactly at the end of the payload.
inline EmbeddingMatrix read_embeddings(std::istream& in) {
    std::array<unsigned char, kEmbHeaderSize> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got >= 4 && std::memcmp(header.data(), kEmbMagic.data(), 4) != 0) {
        throw Error(ErrorCode::BadMagic, "expected \"MVEM\"", {}, 0);
    }
    if (got < header.size()) {
        throw Error(ErrorCode::TruncatedPayload, "header ends early", {}, got);
    }
    if (detail::get_u32(header.data() + 4) != kEmbVersion) {
        throw Error(ErrorCode::UnsupportedVersion,
                    "version " + std::to_string(detail::get_u32(header.data() + 4)), {}, 4);
    }
    const std::uint32_t rows = detail::get_u32(header.data() + 8);
    const std::uint32_t cols = detail::get_u32(header.data() + 12);
    if (detail::get_u32(header.data() + 16) != kEmbDtypeF32) {
        throw Error(ErrorCode::DtypeMismatch,
                    "dtype " + std::to_string(detail::get_u32(header.data() + 16)), {}, 16);
    }
    if (detail::get_u32(header.data() + 20) != 0) {
        throw Error(ErrorCode::UnsupportedVersion, "reserved field must be 0", {}, 20);
    }
    if (cols == 0) {
        throw Error(ErrorCode::DimMismatch, "cols must be >= 1", {}, 12);
    }

    const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
    std::vector<float> data;
    std::vector<unsigned char> buf(4096 * 4);
    data.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
    std::uint64_t remaining = count * 4;
    while (remaining > 0) {
        const auto want = static_cast<std::streamsize>(std::min<std::uint64_t>(remaining, buf.size()));
        in.read(reinterpret_cast<char*>(buf.data()), want);
        const auto n = in.gcount();
        for (std::streamsize i = 0; i + 3 < n; i += 4) {
            data.push_back(std::bit_cast<float>(detail::get_u32(buf.data() + i)));
        }
        if (n < want) {
            const std::uint64_t at = kEmbHeaderSize + (count * 4 - remaining) + static_cast<std::uint64_t>(n);
            throw Error(ErrorCode::TruncatedPayload,
                        "payload needs " + std::to_string(count * 4) + " bytes", {}, at);
        }
        remaining -= static_cast<std::uint64_t>(n);
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorCode::TrailingBytes, "bytes after payload", {}, kEmbHeaderSize + count * 4);
    }
    return EmbeddingMatrix(rows, cols, std::move(data), false);
}

inline void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing", path.string());
    }
    write_embeddings(m, out);
}

inline EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string(), path.string());
    }
    return read_embeddings(in);
}

/// Divides every row by its Euclidean norm (accumulated in double).
/// Throws ZeroNormRow naming the first row whose norm is below 1e-8.
inline EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
    std::vector<float> out(m.data().begin(), m.data().end());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double n = detail::row_norm(m.row(i));
        if (!(n >= kZeroNormThreshold)) {
            throw Error(ErrorCode::ZeroNormRow, "row " + std::to_string(i) + " has norm " + std::to_string(n),
                        std::to_string(i));
        }
        // Rows already unit to within f32 rounding are kept bit-for-bit, which
        // makes normalize_rows idempotent.
        if (std::abs(n - 1.0) <= kF32UnitSlack) continue;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out[i * m.cols() + j] = static_cast<float>(static_cast<double>(out[i * m.cols() + j]) / n);
        }
    }
    return EmbeddingMatrix(m.rows(), m.cols(), std::move(out), true);
}

/// Row indices whose norm deviates from 1 by more than kUnitNormTolerance.
inline std::vector<std::size_t> non_unit_rows(const EmbeddingMatrix& m) {
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (std::abs(detail::row_norm(m.row(i)) - 1.0) > kUnitNormTolerance) bad.push_back(i);
    }
    return bad;
}

}  // namespace mvzero
