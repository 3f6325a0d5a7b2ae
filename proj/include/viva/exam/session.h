#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "viva/common.h"
#include "viva/final_assessment.h"
#include "viva/guard/submission_guard.h"

namespace viva::exam {

inline constexpr int kMaxQuestionsCeiling = 20;

struct ExamConfig {
  int min_questions = 4;
  int max_questions = 5;
  std::string academic_context;
  std::chrono::seconds answer_timeout{600};
  std::string provider_id = "mock";
  int max_provider_retries = 2;

  bool operator==(const ExamConfig&) const = default;
};

/// Throws Error{kInvalidConfig} naming the first violated invariant.
void validate(const ExamConfig& config);

enum class SessionState {
  kCreated,
  kSubmissionIngested,  // reserved: ingestion and acceptance are one step
  kAwaitingQuestion,
  kAwaitingAnswer,
  kConcludingForced,
  kCompleted,
  kAborted,
};

std::string_view to_string(SessionState state);
SessionState parse_session_state(std::string_view text);
bool is_terminal(SessionState state);

struct SubmissionAccepted {
  std::shared_ptr<const guard::SanitizedSubmission> submission;
};
struct QuestionIssued {
  std::string text;
};
struct AnswerReceived {
  std::string text;
};
struct VerdictIssued {
  FinalAssessment verdict;
};
struct Timeout {};
struct Abort {
  std::string reason;
};

using EventPayload =
    std::variant<SubmissionAccepted, QuestionIssued, AnswerReceived, VerdictIssued, Timeout, Abort>;

std::string_view event_name(const EventPayload& payload);

/// An event plus the transcript entry that recorded it.
struct SessionEvent {
  EventPayload payload;
  std::uint64_t seq = 0;
  Timestamp at{};
};

enum class TurnKind { kQuestion, kAnswer };

struct Turn {
  std::uint64_t seq = 0;
  TurnKind kind = TurnKind::kQuestion;
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct ExamSession {
  std::string session_id;
  ExamConfig config;
  SessionState state = SessionState::kCreated;
  std::shared_ptr<const guard::SanitizedSubmission> submission;
  int questions_asked = 0;
  std::vector<Turn> turns;
  std::optional<FinalAssessment> verdict;
  Timestamp created_at{};
  std::optional<Timestamp> concluded_at;
  std::optional<std::string> abort_reason;

  int answers_given() const;

  /// Deep comparison (the submission is compared by value).
  bool operator==(const ExamSession& other) const;
};

/// Throws Error{kInvalidConfig}.
ExamSession create_session(const ExamConfig& config, std::string session_id, Timestamp created_at);

/// Pure: applies one event and returns the successor session.
///   Created          + SubmissionAccepted -> AwaitingQuestion
///   AwaitingQuestion + QuestionIssued     -> AwaitingAnswer (questions_asked + 1)
///   AwaitingAnswer   + AnswerReceived     -> AwaitingQuestion, or ConcludingForced
///                                            once questions_asked == max_questions
///   non-terminal     + VerdictIssued      -> Completed (needs questions_asked >= min)
///   non-terminal     + Timeout | Abort    -> Aborted
/// Throws Error{kInvalidTransition}, Error{kPrematureVerdict}, or
/// Error{kInvalidEvent} for an empty question/answer payload.
ExamSession transition(const ExamSession& session, const SessionEvent& event);

int question_budget_remaining(const ExamSession& session);

}  // namespace viva::exam
