#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace warpforge {

enum class ErrorCode {
  shape_mismatch,
  invalid_argument,
  numeric,
  io,
  bad_format,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::io: return "io";
    case ErrorCode::bad_format: return "bad_format";
  }
  return "unknown";
}

// Exception carrying a machine-readable code, plus a byte offset for file
// format errors so callers can report where parsing failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<uint64_t> byte_offset = std::nullopt)
      : std::runtime_error(compose(code, message, byte_offset)),
        code_(code),
        byte_offset_(byte_offset) {}

  ErrorCode code() const { return code_; }
  std::optional<uint64_t> byte_offset() const { return byte_offset_; }

 private:
  static std::string compose(ErrorCode code, const std::string& message,
                             std::optional<uint64_t> byte_offset) {
    std::string s = std::string(to_string(code)) + ": " + message;
    if (byte_offset) s += " (byte offset " + std::to_string(*byte_offset) + ")";
    return s;
  }

  ErrorCode code_;
  std::optional<uint64_t> byte_offset_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

[[noreturn]] inline void fail_shape(const std::string& message) {
  throw Error(ErrorCode::shape_mismatch, message);
}

}  // namespace warpforge
