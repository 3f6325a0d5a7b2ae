#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "viva/common.h"

namespace viva::guard {

inline constexpr std::size_t kDefaultSizeCap = 2 * 1024 * 1024;
inline constexpr std::string_view kPlainText = "text/plain";

struct RawSubmission {
  std::string bytes;
  std::string declared_format;
  Timestamp received_at;
};

enum class Severity { kLow, kMedium, kHigh };

std::string_view to_string(Severity severity);
Severity parse_severity(std::string_view text);

/// Half-open byte range [begin, end) into the normalized text.
struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const ByteSpan&) const = default;
};

struct InjectionFlag {
  std::string rule_id;
  Severity severity = Severity::kLow;
  ByteSpan span;
  std::string excerpt;
  std::string description;

  bool operator==(const InjectionFlag&) const = default;
};

struct SanitizedSubmission {
  std::string text;
  std::vector<InjectionFlag> flags;
  std::string original_digest;  // sha256 hex of the raw bytes
  std::size_t word_count = 0;

  bool operator==(const SanitizedSubmission&) const = default;
};

struct NormalizedText {
  std::string text;
  std::vector<InjectionFlag> flags;
};

/// One pattern record from a rules file. Several records may share an id.
struct Rule {
  std::string id;
  Severity severity = Severity::kMedium;
  std::string pattern;
  std::string description;
};

/// Compiled, versioned rule set. Patterns are case-insensitive, Perl syntax,
/// `^` matching at line starts.
class RuleSet {
 public:
  /// Parses the rules-file JSON: {"version": "...", "rules": [{id, severity,
  /// pattern, description?}, ...]}. Throws Error{kParseError} on bad input or
  /// a pattern that fails to compile.
  static RuleSet parse(std::string_view json_text);
  static RuleSet load(const std::string& path);

  /// The rule set shipped in rules/default_rules.json, compiled in.
  static const RuleSet& builtin();

  RuleSet(RuleSet&&) noexcept;
  RuleSet& operator=(RuleSet&&) noexcept;
  ~RuleSet();

  const std::string& version() const;
  const std::vector<Rule>& rules() const;

  std::vector<InjectionFlag> scan(std::string_view text) const;

 private:
  struct Impl;
  explicit RuleSet(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Throws Error with kUnsupportedFormat, kEmptySubmission,
/// kOversizeSubmission or kInvalidEncoding.
RawSubmission ingest(std::string bytes, std::string_view declared_format, Timestamp received_at,
                     std::size_t size_cap = kDefaultSizeCap);

bool is_valid_utf8(std::string_view bytes);

/// CRLF and lone CR become LF, invisible/bidi-override code points and stray
/// control characters are removed (each removal site flagged), then NFC.
NormalizedText normalize(const RawSubmission& raw);

std::vector<InjectionFlag> scan_injection(std::string_view text,
                                          const RuleSet& rules = RuleSet::builtin());

/// normalize + scan_injection. Flags are sorted by span start. Throws
/// Error{kEmptySubmission} if nothing but whitespace survives normalization.
SanitizedSubmission sanitize(const RawSubmission& raw, const RuleSet& rules = RuleSet::builtin());

/// Code points stripped by normalize() and reported as "invisible-chars".
bool is_invisible_codepoint(char32_t cp);

}  // namespace viva::guard
