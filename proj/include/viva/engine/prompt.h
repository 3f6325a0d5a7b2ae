#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "viva/exam/session.h"

namespace viva::engine {

inline constexpr std::string_view kPromptTemplateVersion = "viva-examiner-prompt/1";

inline constexpr std::string_view kSubmissionBegin = "<<<SUBMITTED WORK BEGINS>>>";
inline constexpr std::string_view kSubmissionEnd = "<<<SUBMITTED WORK ENDS>>>";

inline constexpr std::string_view kForcedConclusionInstruction =
    "The question budget is exhausted. Do not ask any further questions. Your next message must "
    "be ONLY the final JSON object with the keys \"assessment\" and \"confidence_score\", with no "
    "other text or markdown formatting.";

/// Who authored a conversation message. Operator messages come from the
/// examination system itself (the submitted work, corrective instructions).
enum class Speaker { kOperator, kExaminer, kCandidate };

std::string_view to_string(Speaker speaker);

struct PromptMessage {
  Speaker role = Speaker::kOperator;
  std::string content;

  bool operator==(const PromptMessage&) const = default;
};

struct PromptBundle {
  std::string system_prompt;
  std::vector<PromptMessage> conversation;

  bool operator==(const PromptBundle&) const = default;
};

std::string build_system_prompt(const exam::ExamConfig& config);

/// The operator message that hands the submitted work to the examiner.
std::string submission_message(std::string_view submission_text);

/// Sent after a rejected provider output.
std::string corrective_instruction(std::string_view problem);

/// System prompt + submission + full question/answer history, plus the
/// forced-conclusion instruction when the session is in ConcludingForced.
PromptBundle build_bundle(const exam::ExamSession& session);

}  // namespace viva::engine
