#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "viva/final_assessment.h"

namespace viva::engine {

struct Question {
  std::string text;

  bool operator==(const Question&) const = default;
};

struct Verdict {
  FinalAssessment assessment;
  bool fenced = false;  // arrived wrapped in a markdown code fence

  bool operator==(const Verdict&) const = default;
};

struct Malformed {
  std::string raw;  // verbatim provider output
  std::string error;

  bool operator==(const Malformed&) const = default;
};

using EngineOutput = std::variant<Question, Verdict, Malformed>;

/// Total over all inputs; never throws.
///  - Verdict: after trimming and stripping one surrounding ``` fence, the text
///    is a JSON object with exactly "assessment" (string, >= 200 chars) and
///    "confidence_score" (integer in [0, 100]).
///  - Question: the text contains no JSON object and no verdict keys.
///  - Malformed: anything else, including empty output.
EngineOutput classify_output(std::string_view raw);

/// True if any '{' in `text` starts a substring that parses as a JSON object.
bool contains_json_object(std::string_view text);

/// Removes one surrounding markdown code fence (``` or ```lang). Returns the
/// input unchanged when it is not fenced.
std::string_view strip_code_fence(std::string_view text, bool* stripped = nullptr);

}  // namespace viva::engine
