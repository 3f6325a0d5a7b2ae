#include "viva/exam/session.h"

#include <algorithm>

#include "json.hpp"

namespace viva {

std::string to_verdict_json(const FinalAssessment& verdict) {
  nlohmann::ordered_json j;
  j["assessment"] = verdict.assessment;
  j["confidence_score"] = verdict.confidence_score;
  return j.dump();
}

}  // namespace viva

namespace viva::exam {
namespace {

[[noreturn]] void invalid_transition(SessionState state, const EventPayload& payload) {
  throw Error(ErrorCode::kInvalidTransition,
              "invalid transition: " + std::string(event_name(payload)) + " in state " +
                  std::string(to_string(state)));
}

void require_text(std::string_view text, std::string_view what) {
  if (trim(text).empty()) {
    throw Error(ErrorCode::kInvalidEvent, std::string(what) + " text must not be empty");
  }
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

void validate(const ExamConfig& config) {
  const auto fail = [](const std::string& why) { throw Error(ErrorCode::kInvalidConfig, why); };
  if (config.min_questions < 1) fail("min_questions must be at least 1");
  if (config.min_questions > config.max_questions) fail("min_questions must not exceed max_questions");
  if (config.max_questions > kMaxQuestionsCeiling) fail("max_questions must not exceed 20");
  if (config.answer_timeout.count() <= 0) fail("answer_timeout must be positive");
  if (config.max_provider_retries < 0) fail("max_provider_retries must not be negative");
  if (config.provider_id.empty()) fail("provider_id must not be empty");
}

std::string_view to_string(SessionState state) {
  switch (state) {
    case SessionState::kCreated: return "Created";
    case SessionState::kSubmissionIngested: return "SubmissionIngested";
    case SessionState::kAwaitingQuestion: return "AwaitingQuestion";
    case SessionState::kAwaitingAnswer: return "AwaitingAnswer";
    case SessionState::kConcludingForced: return "ConcludingForced";
    case SessionState::kCompleted: return "Completed";
    case SessionState::kAborted: return "Aborted";
  }
  return "Created";
}

SessionState parse_session_state(std::string_view text) {
  for (auto s : {SessionState::kCreated, SessionState::kSubmissionIngested,
                 SessionState::kAwaitingQuestion, SessionState::kAwaitingAnswer,
                 SessionState::kConcludingForced, SessionState::kCompleted, SessionState::kAborted}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::kParseError, "unknown session state: " + std::string(text));
}

bool is_terminal(SessionState state) {
  return state == SessionState::kCompleted || state == SessionState::kAborted;
}

std::string_view event_name(const EventPayload& payload) {
  return std::visit(Overloaded{
                        [](const SubmissionAccepted&) { return std::string_view("SubmissionAccepted"); },
                        [](const QuestionIssued&) { return std::string_view("QuestionIssued"); },
                        [](const AnswerReceived&) { return std::string_view("AnswerReceived"); },
                        [](const VerdictIssued&) { return std::string_view("VerdictIssued"); },
                        [](const Timeout&) { return std::string_view("Timeout"); },
                        [](const Abort&) { return std::string_view("Abort"); },
                    },
                    payload);
}

int ExamSession::answers_given() const {
  return static_cast<int>(std::count_if(turns.begin(), turns.end(),
                                        [](const Turn& t) { return t.kind == TurnKind::kAnswer; }));
}

bool ExamSession::operator==(const ExamSession& other) const {
  const bool same_submission =
      submission == other.submission ||
      (submission && other.submission && *submission == *other.submission);
  return same_submission && session_id == other.session_id && config == other.config &&
         state == other.state && questions_asked == other.questions_asked &&
         turns == other.turns && verdict == other.verdict && created_at == other.created_at &&
         concluded_at == other.concluded_at && abort_reason == other.abort_reason;
}

ExamSession create_session(const ExamConfig& config, std::string session_id, Timestamp created_at) {
  validate(config);
  ExamSession session;
  session.session_id = std::move(session_id);
  session.config = config;
  session.created_at = created_at;
  return session;
}

ExamSession transition(const ExamSession& session, const SessionEvent& event) {
  const SessionState state = session.state;
  if (is_terminal(state)) {
    invalid_transition(state, event.payload);
  }
  ExamSession next = session;
  std::visit(
      Overloaded{
          [&](const SubmissionAccepted& e) {
            if (state != SessionState::kCreated) invalid_transition(state, event.payload);
            if (!e.submission) {
              throw Error(ErrorCode::kInvalidEvent, "SubmissionAccepted carries no submission");
            }
            next.submission = e.submission;
            next.state = SessionState::kAwaitingQuestion;
          },
          [&](const QuestionIssued& e) {
            if (state != SessionState::kAwaitingQuestion) invalid_transition(state, event.payload);
            require_text(e.text, "question");
            next.turns.push_back(Turn{event.seq, TurnKind::kQuestion, e.text});
            next.questions_asked += 1;
            next.state = SessionState::kAwaitingAnswer;
          },
          [&](const AnswerReceived& e) {
            if (state != SessionState::kAwaitingAnswer) invalid_transition(state, event.payload);
            require_text(e.text, "answer");
            next.turns.push_back(Turn{event.seq, TurnKind::kAnswer, e.text});
            next.state = session.questions_asked < session.config.max_questions
                             ? SessionState::kAwaitingQuestion
                             : SessionState::kConcludingForced;
          },
          [&](const VerdictIssued& e) {
            if (session.questions_asked < session.config.min_questions) {
              throw Error(ErrorCode::kPrematureVerdict,
                          "verdict after " + std::to_string(session.questions_asked) +
                              " questions; at least " +
                              std::to_string(session.config.min_questions) + " are required");
            }
            next.verdict = e.verdict;
            next.state = SessionState::kCompleted;
            next.concluded_at = event.at;
          },
          [&](const Timeout&) {
            next.state = SessionState::kAborted;
            next.abort_reason = "answer timeout";
            next.concluded_at = event.at;
          },
          [&](const Abort& e) {
            next.state = SessionState::kAborted;
            next.abort_reason = e.reason;
            next.concluded_at = event.at;
          },
      },
      event.payload);
  return next;
}

int question_budget_remaining(const ExamSession& session) {
  return std::max(0, session.config.max_questions - session.questions_asked);
}

}  // namespace viva::exam
