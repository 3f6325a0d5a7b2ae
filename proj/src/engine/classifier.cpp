#include "viva/engine/classifier.h"

#include <algorithm>
#include <cctype>
#include <vector>
#include <regex>

#include "json.hpp"
#include "viva/common.h"

namespace viva::engine {
namespace {

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

// Index one past the '}' balancing the '{' at `open`, honouring JSON string
// literals; npos if unbalanced.
std::size_t balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

bool has_verdict_keys(std::string_view text) {
  static const std::regex keys(R"re("(assessment|confidence_score)"\s*:)re");
  return std::regex_search(text.begin(), text.end(), keys);
}

Malformed malformed(std::string_view raw, std::string error) {
  return Malformed{std::string(raw), std::move(error)};
}

}  // namespace

std::string_view strip_code_fence(std::string_view text, bool* stripped) {
  if (stripped) *stripped = false;
  const std::string_view t = trim(text);
  if (t.size() < 6 || t.substr(0, 3) != "```" || t.substr(t.size() - 3) != "```") {
    return text;
  }
  std::string_view inner = t.substr(3, t.size() - 6);
  // Optional info string (```json) up to the first newline.
  const std::size_t nl = inner.find('\n');
  if (nl == std::string_view::npos) {
    return text;
  }
  const std::string_view info = trim(inner.substr(0, nl));
  for (char c : info) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') {
      return text;
    }
  }
  inner.remove_prefix(nl + 1);
  if (inner.find("```") != std::string_view::npos) {
    return text;  // more than one fence
  }
  if (stripped) *stripped = true;
  return trim(inner);
}

bool contains_json_object(std::string_view text) {
  for (std::size_t open = text.find('{'); open != std::string_view::npos;
       open = text.find('{', open + 1)) {
    const std::size_t end = balanced_end(text, open);
    if (end == std::string_view::npos) {
      continue;
    }
    if (nlohmann::json::accept(text.substr(open, end - open))) {
      return true;
    }
  }
  return false;
}

EngineOutput classify_output(std::string_view raw) {
  const std::string_view trimmed = trim(raw);
  if (trimmed.empty()) {
    return malformed(raw, "empty output");
  }
  bool fenced = false;
  const std::string_view body = strip_code_fence(trimmed, &fenced);

  bool duplicate_key = false;
  std::vector<std::string> top_keys;
  const nlohmann::json::parser_callback_t track_keys =
      [&](int depth, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
        if (depth == 1 && event == nlohmann::json::parse_event_t::key) {
          const auto key = parsed.get<std::string>();
          duplicate_key |= std::find(top_keys.begin(), top_keys.end(), key) != top_keys.end();
          top_keys.push_back(key);
        }
        return true;
      };
  nlohmann::json doc = nlohmann::json::parse(body.begin(), body.end(), track_keys,
                                             /*allow_exceptions=*/false);
  if (!doc.is_discarded()) {
    if (!doc.is_object()) {
      return malformed(raw, "output is JSON but not an object");
    }
    if (duplicate_key) {
      return malformed(raw, "verdict repeats a key");
    }
    if (doc.size() != 2 || !doc.contains("assessment") || !doc.contains("confidence_score")) {
      return malformed(raw, "verdict must have exactly the keys \"assessment\" and \"confidence_score\"");
    }
    const auto& assessment = doc["assessment"];
    const auto& score = doc["confidence_score"];
    if (!assessment.is_string()) {
      return malformed(raw, "\"assessment\" must be a string");
    }
    if (!score.is_number_integer()) {
      return malformed(raw, "\"confidence_score\" must be an integer");
    }
    const auto value = score.get<std::int64_t>();
    if (value < 0 || value > 100) {
      return malformed(raw, "\"confidence_score\" " + std::to_string(value) +
                                " is outside the range 0-100");
    }
    const std::string text = assessment.get<std::string>();
    if (utf8_length(text) < kMinAssessmentChars) {
      return malformed(raw, "\"assessment\" must be a paragraph of at least " +
                                std::to_string(kMinAssessmentChars) + " characters");
    }
    return Verdict{FinalAssessment{text, static_cast<int>(value)}, fenced};
  }

  if (contains_json_object(trimmed)) {
    return malformed(raw, "output mixes text with a JSON object");
  }
  if (has_verdict_keys(trimmed)) {
    return malformed(raw, "output contains verdict keys but is not a JSON object");
  }
  return Question{std::string(trimmed)};
}

}  // namespace viva::engine
