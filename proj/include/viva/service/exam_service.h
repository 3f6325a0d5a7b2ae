#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "viva/audit/store.h"
#include "viva/engine/provider.h"
#include "viva/exam/session.h"
#include "viva/guard/submission_guard.h"

namespace viva::service {

using ProviderFactory =
    std::function<std::shared_ptr<engine::ProviderPort>(const exam::ExamConfig& config)>;

/// "mock" gets a shared MockProvider; "live" a LiveProvider built from
/// `live`. Anything else throws Error{kInvalidConfig}.
ProviderFactory default_provider_factory(engine::LiveProviderSettings live = {});

/// Yields `first`, then first-2, first-3, ... Used for reproducible runs.
std::function<std::string()> fixed_id_generator(std::string first);

struct ServiceOptions {
  /// Timestamps written to transcripts.
  Clock clock = system_clock();
  /// Drives answer deadlines. Kept apart from `clock` so that polling for
  /// timeouts never perturbs transcript timestamps.
  Clock deadline_clock = system_clock();
  std::function<std::string()> id_generator;  // default: 16 random hex chars
  ProviderFactory provider_factory = default_provider_factory();
  const guard::RuleSet* rules = nullptr;  // default: built-in rules
  std::size_t max_submission_bytes = guard::kDefaultSizeCap;
};

struct SubmissionResult {
  std::string question;
  int question_number = 0;
  int questions_remaining = 0;
  std::size_t word_count = 0;
};

struct AnswerResult {
  bool concluded = false;
  std::string question;  // empty once concluded
  int question_number = 0;
  int questions_remaining = 0;
};

struct SessionSummary {
  std::string session_id;
  exam::SessionState state = exam::SessionState::kCreated;
  int questions_asked = 0;
  int questions_remaining = 0;
  std::size_t flag_count = 0;
  std::size_t high_flag_count = 0;
  Timestamp created_at{};
  std::optional<Timestamp> concluded_at;
  std::optional<std::string> current_question;  // while awaiting an answer
};

struct AssessmentReport {
  std::string session_id;
  exam::SessionState state = exam::SessionState::kCreated;
  int questions_asked = 0;
  std::optional<FinalAssessment> verdict;
  std::optional<std::string> abort_reason;
  std::vector<guard::InjectionFlag> flags;
  audit::VerificationReport chain;
  bool has_transcript = false;
};

/// Runs examinations: ingestion, engine turns, state transitions and
/// write-ahead transcript appends. Thread-safe; requests for one session are
/// serialized, different sessions proceed in parallel (provider calls
/// included).
class ExamService {
 public:
  ExamService(audit::TranscriptStore& store, ServiceOptions options = {});
  ~ExamService();

  ExamService(const ExamService&) = delete;
  ExamService& operator=(const ExamService&) = delete;

  /// Throws Error{kInvalidConfig}.
  std::string create_session(const exam::ExamConfig& config);

  /// Ingests and sanitizes the work, opens the transcript and returns the
  /// first question. Retrying the identical upload after a provider failure
  /// re-drives the engine without a second ingestion.
  /// Throws kUnknownSession, kWrongState, kUnsupportedFormat,
  /// kEmptySubmission, kInvalidEncoding, kOversizeSubmission,
  /// kProviderUnavailable (session kept) or kProtocolExhausted (aborted).
  SubmissionResult submit(const std::string& session_id, std::string bytes,
                          std::string_view declared_format);

  /// Records the answer and advances. Resending the same answer after a
  /// provider failure re-drives the engine. Throws kUnknownSession,
  /// kWrongState, kEmptyAnswer, kInvalidEncoding, kProviderUnavailable,
  /// kProtocolExhausted.
  AnswerResult answer(const std::string& session_id, std::string_view text);

  /// Throws kUnknownSession, kWrongState (already concluded).
  void abort(const std::string& session_id, std::string_view reason);

  /// Aborts every session whose answer deadline has passed. Returns the
  /// number aborted.
  std::size_t expire_overdue();

  /// Calls expire_overdue() every `interval` on a background thread.
  void start_reaper(std::chrono::milliseconds interval);
  void stop_reaper();

  /// Throws kUnknownSession, kNotConcluded.
  AssessmentReport assessment(const std::string& session_id) const;

  /// Sessions in creation order (reloaded sessions first, by id).
  std::vector<SessionSummary> list() const;
  SessionSummary summary(const std::string& session_id) const;
  exam::ExamSession snapshot(const std::string& session_id) const;
  bool contains(const std::string& session_id) const;

  /// Blocks until the session has a transcript or is concluded, or `wait`
  /// elapses. Returns true if a transcript exists.
  bool wait_for_transcript(const std::string& session_id, std::chrono::milliseconds wait) const;

  audit::TranscriptStore& store() { return store_; }
  const audit::TranscriptStore& store() const { return store_; }

 private:
  struct Slot;

  std::shared_ptr<Slot> find(const std::string& session_id) const;
  void reload();
  void drive(Slot& slot);
  void append_note(Slot& slot, std::string_view severity, const std::string& text);
  void conclude_aborted(Slot& slot, std::string content, exam::EventPayload payload);
  bool expire_if_overdue(Slot& slot);
  void apply(Slot& slot, audit::Role role, std::string content, exam::EventPayload payload);
  SessionSummary summarize(const Slot& slot) const;
  void notify_transcript();

  audit::TranscriptStore& store_;
  ServiceOptions options_;

  mutable std::shared_mutex map_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Slot>> slots_;
  std::vector<std::string> order_;

  mutable std::mutex transcript_mutex_;
  mutable std::condition_variable transcript_cv_;

  std::mutex reaper_mutex_;
  std::condition_variable reaper_cv_;
  bool reaper_stop_ = false;
  std::thread reaper_;
};

}  // namespace viva::service
