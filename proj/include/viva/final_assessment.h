#pragma once

#include <cstddef>
#include <string>

namespace viva {

/// The examiner's two-key verdict.
struct FinalAssessment {
  std::string assessment;
  int confidence_score = 0;

  bool operator==(const FinalAssessment&) const = default;
};

/// Minimum assessment length in characters (code points) for a verdict to
/// count as a paragraph.
inline constexpr std::size_t kMinAssessmentChars = 200;

/// Canonical compact two-key JSON form: {"assessment":"...","confidence_score":N}
std::string to_verdict_json(const FinalAssessment& verdict);

}  // namespace viva
