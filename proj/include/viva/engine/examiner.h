#pragma once

#include <string>
#include <vector>

#include "viva/engine/classifier.h"
#include "viva/engine/provider.h"
#include "viva/exam/session.h"

namespace viva::engine {

/// Audit notes produced while driving a turn (rejected outputs, transport
/// failures, tolerated format breaches). Each becomes a Note transcript entry.
struct TurnNote {
  std::string severity;  // "Low" | "Medium" | "High"
  std::string text;
};

struct TurnResult {
  EngineOutput output;  // Question or Verdict; never Malformed
  std::vector<TurnNote> notes;
  int provider_calls = 0;
};

/// Raised when a turn cannot produce an acceptable output. code() is
/// kProviderUnavailable (last attempt failed in transport) or
/// kProtocolExhausted (last attempt was rejected). Notes are preserved.
class TurnError : public Error {
 public:
  TurnError(ErrorCode code, const std::string& message, std::vector<TurnNote> notes)
      : Error(code, message), notes_(std::move(notes)) {}

  const std::vector<TurnNote>& notes() const { return notes_; }

 private:
  std::vector<TurnNote> notes_;
};

/// Asks the provider for the next examiner message. Calls the provider at
/// most 1 + config.max_provider_retries times. Rejects and retries, with a
/// corrective instruction appended, on Malformed output, on a verdict before
/// min_questions, and on a question after the budget is exhausted.
/// Precondition: state is AwaitingQuestion or ConcludingForced
/// (otherwise Error{kWrongState}).
TurnResult next_turn(const exam::ExamSession& session, ProviderPort& provider);

}  // namespace viva::engine
