#include "viva/engine/examiner.h"

#include <variant>

namespace viva::engine {

TurnResult next_turn(const exam::ExamSession& session, ProviderPort& provider) {
  using exam::SessionState;
  if (session.state != SessionState::kAwaitingQuestion &&
      session.state != SessionState::kConcludingForced) {
    throw Error(ErrorCode::kWrongState, "no examiner turn is due in state " +
                                            std::string(exam::to_string(session.state)));
  }
  const bool concluding = session.state == SessionState::kConcludingForced;
  const int attempts = 1 + session.config.max_provider_retries;

  PromptBundle bundle = build_bundle(session);
  TurnResult result;
  ErrorCode last_failure = ErrorCode::kProtocolExhausted;
  std::string last_problem;

  for (int attempt = 1; attempt <= attempts; ++attempt) {
    const std::string tag =
        " (attempt " + std::to_string(attempt) + " of " + std::to_string(attempts) + ")";
    std::string raw;
    ++result.provider_calls;
    try {
      raw = provider.complete(bundle);
    } catch (const Error& ex) {
      if (ex.code() != ErrorCode::kProviderUnavailable) throw;
      last_failure = ErrorCode::kProviderUnavailable;
      last_problem = ex.what();
      result.notes.push_back({"Medium", "Provider call failed" + tag + ": " + ex.what()});
      continue;
    }

    EngineOutput output = classify_output(raw);
    std::string problem;
    if (const auto* m = std::get_if<Malformed>(&output)) {
      problem = m->error;
    } else if (const auto* v = std::get_if<Verdict>(&output)) {
      if (session.questions_asked < session.config.min_questions) {
        problem = "verdict issued after " + std::to_string(session.questions_asked) +
                  " questions; at least " + std::to_string(session.config.min_questions) +
                  " questions are required";
      } else if (v->fenced) {
        result.notes.push_back(
            {"Low", "Verdict arrived wrapped in a markdown code fence; accepted after stripping."});
      }
    } else if (concluding) {
      problem = "a question was asked after the question budget was exhausted";
    }

    if (problem.empty()) {
      result.output = std::move(output);
      return result;
    }
    last_failure = ErrorCode::kProtocolExhausted;
    last_problem = problem;
    result.notes.push_back({"Medium", "Provider output rejected" + tag + ": " + problem +
                                          ". Raw output follows.\n" + raw});
    bundle.conversation.push_back({Speaker::kOperator, corrective_instruction(problem)});
  }

  const std::string message = last_failure == ErrorCode::kProviderUnavailable
                                  ? "provider unavailable after " + std::to_string(attempts) +
                                        " attempts: " + last_problem
                                  : "no protocol-conformant output after " +
                                        std::to_string(attempts) + " attempts: " + last_problem;
  throw TurnError(last_failure, message, std::move(result.notes));
}

}  // namespace viva::engine
