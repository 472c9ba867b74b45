#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace exmap {

enum class ErrorCode {
  // input validation
  NonFinite,
  InvalidShape,
  EmptyMask,
  Malformed,
  UnsupportedFormat,
  SchemaViolation,
  MissingCue,
  InvalidArgument,
  Io,
  // geometric degeneracy
  NearParallel,
  Degenerate,
  CenterOffLine,
  DegenerateBox,
  SingularCovariance,
};

constexpr std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::InvalidShape: return "invalid_shape";
    case ErrorCode::EmptyMask: return "empty_mask";
    case ErrorCode::Malformed: return "malformed";
    case ErrorCode::UnsupportedFormat: return "unsupported_format";
    case ErrorCode::SchemaViolation: return "schema_violation";
    case ErrorCode::MissingCue: return "missing_cue";
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Io: return "io";
    case ErrorCode::NearParallel: return "near_parallel";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::CenterOffLine: return "center_off_line";
    case ErrorCode::DegenerateBox: return "degenerate_box";
    case ErrorCode::SingularCovariance: return "singular_covariance";
  }
  return "unknown";
}

/// True for errors caused by the geometry of the cue rather than by bad input.
constexpr bool is_geometric(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NearParallel:
    case ErrorCode::Degenerate:
    case ErrorCode::CenterOffLine:
    case ErrorCode::DegenerateBox:
    case ErrorCode::SingularCovariance:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// A parse failure located at a byte offset of the input.
class MalformedError : public Error {
 public:
  MalformedError(std::size_t offset, const std::string& reason)
      : Error(ErrorCode::Malformed, "at byte " + std::to_string(offset) + ": " + reason),
        offset_(offset),
        reason_(reason) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t offset_;
  std::string reason_;
};

/// A JSON document failed validation; path names the offending field.
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& reason)
      : Error(ErrorCode::SchemaViolation, "at \"" + path + "\": " + reason),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace exmap
