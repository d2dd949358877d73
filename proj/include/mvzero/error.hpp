#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mvzero {

enum class ErrorCode {
    BadMagic,
    UnsupportedVersion,
    TruncatedPayload,
    DtypeMismatch,
    TrailingBytes,
    ZeroNormRow,
    IoError,
    ManifestSchemaError,
    BankSchemaError,
    IndexOutOfRange,
    UnknownLabel,
    UnknownClass,
    DimMismatch,
    NonPositiveTemperature,
    InvalidConfig,
    MissingPromptEntry,
    CandidateMismatch,
    MissingLabel,
    EmptyDataset,
    InvalidSweepValue,
    DimTooSmall,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::TruncatedPayload: return "TruncatedPayload";
        case ErrorCode::DtypeMismatch: return "DtypeMismatch";
        case ErrorCode::TrailingBytes: return "TrailingBytes";
        case ErrorCode::ZeroNormRow: return "ZeroNormRow";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ManifestSchemaError: return "ManifestSchemaError";
        case ErrorCode::BankSchemaError: return "BankSchemaError";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::UnknownClass: return "UnknownClass";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::MissingPromptEntry: return "MissingPromptEntry";
        case ErrorCode::CandidateMismatch: return "CandidateMismatch";
        case ErrorCode::MissingLabel: return "MissingLabel";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::InvalidSweepValue: return "InvalidSweepValue";
        case ErrorCode::DimTooSmall: return "DimTooSmall";
    }
    return "Unknown";
}

/// Typed failure carried by every throwing operation in the library.
///
/// `offset()` is set for binary-format failures and names the first byte
/// that could not be accepted. `subject()` carries the offending key, id or
/// row where one exists (e.g. the candidate key of a MissingPromptEntry).
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message, std::string subject = {},
          std::optional<std::uint64_t> offset = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + message),
          code_(code),
          subject_(std::move(subject)),
          offset_(offset) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& subject() const noexcept { return subject_; }
    std::optional<std::uint64_t> offset() const noexcept { return offset_; }

  private:
    ErrorCode code_;
    std::string subject_;
    std::optional<std::uint64_t> offset_;
};

}  // namespace mvzero
