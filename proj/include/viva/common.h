#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace viva {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

/// UTC, ISO-8601 with millisecond precision: 2026-01-31T09:00:00.000Z
std::string format_timestamp(Timestamp t);

/// Accepts the format produced by format_timestamp (fraction optional).
/// Throws Error{kParseError} on anything else.
Timestamp parse_timestamp(std::string_view text);

using Clock = std::function<Timestamp()>;

Clock system_clock();

/// Deterministic clock: returns start, start+step, start+2*step, ...
/// Thread-safe. Used for reproducible transcripts.
Clock stepping_clock(Timestamp start, std::chrono::milliseconds step);

enum class ErrorCode {
  kInvalidConfig,
  kInvalidEvent,
  kInvalidTransition,
  kPrematureVerdict,
  kUnsupportedFormat,
  kInvalidEncoding,
  kOversizeSubmission,
  kEmptySubmission,
  kProviderUnavailable,
  kProtocolExhausted,
  kSessionSealed,
  kStorageFailure,
  kUnknownSession,
  kUnauthorized,
  kWrongState,
  kEmptyAnswer,
  kNotConcluded,
  kParseError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// Random lowercase hex string of 2*n_bytes characters (CSPRNG).
std::string random_hex(std::size_t n_bytes);

/// Whitespace-separated token count.
std::size_t count_words(std::string_view text);

/// Strips ASCII whitespace from both ends.
std::string_view trim(std::string_view text);

}  // namespace viva
