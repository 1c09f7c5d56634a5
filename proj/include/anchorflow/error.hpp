#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace anchorflow {

enum class ErrorCode {
  kInvalidInput,
  kDegenerateRegion,
  kSingularTriangle,
  kBadMagic,
  kBadVersion,
  kTruncated,
  kDimOverflow,
  kMaskMismatch,
  kFormat,
  kIo,
  kNumericalGuard,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid_input";
    case ErrorCode::kDegenerateRegion: return "degenerate_region";
    case ErrorCode::kSingularTriangle: return "singular_triangle";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kBadVersion: return "bad_version";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDimOverflow: return "dim_overflow";
    case ErrorCode::kMaskMismatch: return "mask_mismatch";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kNumericalGuard: return "numerical_guard";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure inside a binary container; carries the byte offset at which
/// the problem was detected.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, std::size_t offset, const std::string& what)
      : Error(code, what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace anchorflow
