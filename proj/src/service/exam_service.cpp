#include "viva/service/exam_service.h"

#include <algorithm>
#include <variant>

#include "viva/engine/examiner.h"
#include "viva/engine/prompt.h"

namespace viva::service {

// Writers hold `work` for the whole request (provider calls included) and
// take `view` only while publishing a new session value. Readers take `view`.
struct ExamService::Slot {
  std::mutex work;
  mutable std::mutex view;

  exam::ExamSession session;
  std::shared_ptr<engine::ProviderPort> provider;
  std::uint64_t next_seq = 0;
  bool has_transcript = false;
  std::size_t flag_count = 0;
  std::size_t high_flag_count = 0;
  std::optional<Timestamp> answer_deadline;
  std::string raw_digest;
  std::string declared_format;
};

namespace {

class SharedMock {
 public:
  static std::shared_ptr<engine::ProviderPort> get() {
    static auto instance = std::make_shared<engine::MockProvider>();
    return instance;
  }
};

std::optional<std::string> last_question(const exam::ExamSession& s) {
  for (auto it = s.turns.rbegin(); it != s.turns.rend(); ++it) {
    if (it->kind == exam::TurnKind::kQuestion) return it->text;
  }
  return std::nullopt;
}

std::optional<std::string> last_answer(const exam::ExamSession& s) {
  if (s.turns.empty() || s.turns.back().kind != exam::TurnKind::kAnswer) return std::nullopt;
  return s.turns.back().text;
}

}  // namespace

ProviderFactory default_provider_factory(engine::LiveProviderSettings live) {
  return [live](const exam::ExamConfig& config) -> std::shared_ptr<engine::ProviderPort> {
    if (config.provider_id == "mock") return SharedMock::get();
    if (config.provider_id == "live") return std::make_shared<engine::LiveProvider>(live);
    throw Error(ErrorCode::kInvalidConfig, "unknown provider: " + config.provider_id);
  };
}

std::function<std::string()> fixed_id_generator(std::string first) {
  auto counter = std::make_shared<std::atomic<int>>(0);
  return [first = std::move(first), counter] {
    const int n = ++*counter;
    return n == 1 ? first : first + "-" + std::to_string(n);
  };
}

ExamService::ExamService(audit::TranscriptStore& store, ServiceOptions options)
    : store_(store), options_(std::move(options)) {
  if (!options_.id_generator) options_.id_generator = [] { return random_hex(8); };
  if (!options_.rules) options_.rules = &guard::RuleSet::builtin();
  reload();
}

ExamService::~ExamService() { stop_reaper(); }

void ExamService::reload() {
  for (const std::string& id : store_.session_ids()) {
    auto slot = std::make_shared<Slot>();
    const audit::TranscriptHeader header = store_.header(id);
    const audit::SubmissionRecord record = store_.submission(id);
    const std::vector<audit::TranscriptEntry> entries = store_.entries(id);
    slot->has_transcript = true;
    slot->next_seq = entries.size();
    slot->flag_count = record.sanitized.flags.size();
    slot->high_flag_count = static_cast<std::size_t>(
        std::count_if(record.sanitized.flags.begin(), record.sanitized.flags.end(),
                      [](const auto& f) { return f.severity == guard::Severity::kHigh; }));
    try {
      slot->session = audit::replay(header, record, entries);
    } catch (const std::exception& ex) {
      slot->session = exam::create_session(header.config, id, header.created_at);
      slot->session.state = exam::SessionState::kAborted;
      slot->session.abort_reason = std::string("transcript could not be replayed: ") + ex.what();
    }
    const bool terminal = exam::is_terminal(slot->session.state);
    if (store_.is_sealed(id)) {
      if (!terminal) {
        // Damaged storage: keep what was readable, accept no further input.
        slot->session.state = exam::SessionState::kAborted;
        slot->session.abort_reason = "transcript storage damaged";
      }
    } else if (terminal) {
      store_.seal(id);
    } else {
      conclude_aborted(*slot,
                       std::string(audit::markers::kAborted) +
                           "service restarted before the session concluded",
                       exam::Abort{"service restarted before the session concluded"});
    }
    slots_.emplace(id, slot);
    order_.push_back(id);
  }
}

std::string ExamService::create_session(const exam::ExamConfig& config) {
  exam::validate(config);
  auto slot = std::make_shared<Slot>();
  slot->provider = options_.provider_factory(config);
  std::unique_lock lock(map_mutex_);
  std::string id;
  for (int attempt = 0;; ++attempt) {
    id = options_.id_generator();
    if (!audit::is_valid_session_id(id)) {
      throw Error(ErrorCode::kInvalidConfig, "generated session id is not valid: " + id);
    }
    if (!slots_.count(id) && !store_.contains(id)) break;
    if (attempt > 100) throw Error(ErrorCode::kStorageFailure, "cannot allocate a session id");
  }
  slot->session = exam::create_session(config, id, options_.clock());
  slots_.emplace(id, slot);
  order_.push_back(id);
  return id;
}

std::shared_ptr<ExamService::Slot> ExamService::find(const std::string& session_id) const {
  std::shared_lock lock(map_mutex_);
  auto it = slots_.find(session_id);
  if (it == slots_.end()) throw Error(ErrorCode::kUnknownSession, "unknown session: " + session_id);
  return it->second;
}

bool ExamService::contains(const std::string& session_id) const {
  std::shared_lock lock(map_mutex_);
  return slots_.count(session_id) != 0;
}

void ExamService::apply(Slot& slot, audit::Role role, std::string content,
                        exam::EventPayload payload) {
  const Timestamp at = options_.clock();
  // Validate before writing so that an illegal event never reaches storage.
  exam::ExamSession next =
      exam::transition(slot.session, exam::SessionEvent{std::move(payload), slot.next_seq, at});
  const audit::TranscriptEntry entry =
      store_.append(slot.session.session_id, role, std::move(content), at);
  if (entry.seq != slot.next_seq) {
    throw Error(ErrorCode::kStorageFailure, "transcript sequence out of step for session " +
                                                slot.session.session_id);
  }
  ++slot.next_seq;
  std::lock_guard view(slot.view);
  slot.session = std::move(next);
}

void ExamService::append_note(Slot& slot, std::string_view severity, const std::string& text) {
  store_.append(slot.session.session_id, audit::Role::kNote,
                "Engine note (" + std::string(severity) + "): " + text, options_.clock());
  ++slot.next_seq;
}

void ExamService::conclude_aborted(Slot& slot, std::string content, exam::EventPayload payload) {
  if (slot.has_transcript) {
    apply(slot, audit::Role::kSystem, std::move(content), std::move(payload));
    store_.seal(slot.session.session_id);
  } else {
    exam::ExamSession next = exam::transition(
        slot.session, exam::SessionEvent{std::move(payload), 0, options_.clock()});
    std::lock_guard view(slot.view);
    slot.session = std::move(next);
  }
  slot.answer_deadline.reset();
  notify_transcript();
}

void ExamService::notify_transcript() {
  std::lock_guard lock(transcript_mutex_);
  transcript_cv_.notify_all();
}

void ExamService::drive(Slot& slot) {
  engine::TurnResult result;
  try {
    result = engine::next_turn(slot.session, *slot.provider);
  } catch (const engine::TurnError& ex) {
    for (const auto& note : ex.notes()) append_note(slot, note.severity, note.text);
    if (ex.code() == ErrorCode::kProviderUnavailable) {
      throw Error(ErrorCode::kProviderUnavailable, ex.what());
    }
    const std::string reason = std::string("examiner protocol exhausted: ") + ex.what();
    conclude_aborted(slot, std::string(audit::markers::kAborted) + reason, exam::Abort{reason});
    throw Error(ErrorCode::kProtocolExhausted, ex.what());
  }
  for (const auto& note : result.notes) append_note(slot, note.severity, note.text);

  if (const auto* q = std::get_if<engine::Question>(&result.output)) {
    apply(slot, audit::Role::kExaminer, q->text, exam::QuestionIssued{q->text});
    slot.answer_deadline = options_.deadline_clock() + slot.session.config.answer_timeout;
  } else if (const auto* v = std::get_if<engine::Verdict>(&result.output)) {
    apply(slot, audit::Role::kVerdict, to_verdict_json(v->assessment),
          exam::VerdictIssued{v->assessment});
    slot.answer_deadline.reset();
  } else {
    throw Error(ErrorCode::kProtocolExhausted, "engine returned malformed output");
  }
}

SubmissionResult ExamService::submit(const std::string& session_id, std::string bytes,
                                     std::string_view declared_format) {
  auto slot_ptr = find(session_id);
  Slot& slot = *slot_ptr;
  std::lock_guard work(slot.work);
  const auto& s = slot.session;

  const bool retry = s.state == exam::SessionState::kAwaitingQuestion && s.questions_asked == 0 &&
                     slot.raw_digest == sha256_hex(bytes) &&
                     slot.declared_format == declared_format;
  if (!retry) {
    if (s.state != exam::SessionState::kCreated) {
      throw Error(ErrorCode::kWrongState, "a submission has already been received (state " +
                                              std::string(exam::to_string(s.state)) + ")");
    }
    guard::RawSubmission raw = guard::ingest(std::move(bytes), declared_format, options_.clock(),
                                             options_.max_submission_bytes);
    guard::SanitizedSubmission sanitized = guard::sanitize(raw, *options_.rules);

    audit::TranscriptHeader header;
    header.session_id = session_id;
    header.created_at = s.created_at;
    header.config = s.config;
    header.submission_digest = sanitized.original_digest;
    header.rules_version = options_.rules->version();
    header.prompt_template_version = std::string(engine::kPromptTemplateVersion);
    header.provider = audit::ProviderInfo{slot.provider->provider_id(), slot.provider->model()};

    audit::SubmissionRecord record;
    record.raw = std::move(raw.bytes);
    record.declared_format = std::move(raw.declared_format);
    record.received_at = raw.received_at;
    record.sanitized = std::move(sanitized);

    store_.open_transcript(header, record);
    slot.raw_digest = record.sanitized.original_digest;
    slot.declared_format = std::string(declared_format);
    {
      std::lock_guard view(slot.view);
      slot.has_transcript = true;
      slot.flag_count = record.sanitized.flags.size();
      slot.high_flag_count = static_cast<std::size_t>(
          std::count_if(record.sanitized.flags.begin(), record.sanitized.flags.end(),
                        [](const auto& f) { return f.severity == guard::Severity::kHigh; }));
    }
    notify_transcript();

    auto shared = std::make_shared<const guard::SanitizedSubmission>(record.sanitized);
    apply(slot, audit::Role::kSystem, audit::submission_accepted_content(header, record),
          exam::SubmissionAccepted{shared});
    for (const auto& flag : shared->flags) {
      store_.append(session_id, audit::Role::kNote, audit::flag_note_content(flag),
                    options_.clock());
      ++slot.next_seq;
    }
  }

  drive(slot);
  SubmissionResult result;
  result.question = slot.session.turns.back().text;
  result.question_number = slot.session.questions_asked;
  result.questions_remaining = exam::question_budget_remaining(slot.session);
  result.word_count = slot.session.submission ? slot.session.submission->word_count : 0;
  return result;
}

AnswerResult ExamService::answer(const std::string& session_id, std::string_view text) {
  auto slot_ptr = find(session_id);
  Slot& slot = *slot_ptr;
  std::lock_guard work(slot.work);
  if (expire_if_overdue(slot)) {
    throw Error(ErrorCode::kWrongState, "the answer deadline has passed; the session was aborted");
  }
  const auto& s = slot.session;
  if (!guard::is_valid_utf8(text)) {
    throw Error(ErrorCode::kInvalidEncoding, "answer is not valid UTF-8");
  }
  if (trim(text).empty()) throw Error(ErrorCode::kEmptyAnswer, "answer must not be empty");

  if (s.state == exam::SessionState::kAwaitingAnswer) {
    apply(slot, audit::Role::kCandidate, std::string(text), exam::AnswerReceived{std::string(text)});
    slot.answer_deadline.reset();
  } else {
    const bool retry = (s.state == exam::SessionState::kAwaitingQuestion ||
                        s.state == exam::SessionState::kConcludingForced) &&
                       last_answer(s) == std::string(text);
    if (!retry) {
      throw Error(ErrorCode::kWrongState,
                  "no answer is expected in state " + std::string(exam::to_string(s.state)));
    }
  }

  drive(slot);
  AnswerResult result;
  result.concluded = slot.session.state == exam::SessionState::kCompleted;
  if (!result.concluded) result.question = slot.session.turns.back().text;
  result.question_number = slot.session.questions_asked;
  result.questions_remaining = exam::question_budget_remaining(slot.session);
  return result;
}

void ExamService::abort(const std::string& session_id, std::string_view reason) {
  auto slot_ptr = find(session_id);
  Slot& slot = *slot_ptr;
  std::lock_guard work(slot.work);
  if (exam::is_terminal(slot.session.state)) {
    throw Error(ErrorCode::kWrongState, "session has already concluded");
  }
  if (!guard::is_valid_utf8(reason)) {
    throw Error(ErrorCode::kInvalidEncoding, "abort reason is not valid UTF-8");
  }
  std::string why(trim(reason));
  if (why.empty()) why = "aborted by invigilator";
  conclude_aborted(slot, std::string(audit::markers::kAborted) + why, exam::Abort{why});
}

bool ExamService::expire_if_overdue(Slot& slot) {
  if (slot.session.state != exam::SessionState::kAwaitingAnswer || !slot.answer_deadline ||
      options_.deadline_clock() < *slot.answer_deadline) {
    return false;
  }
  conclude_aborted(slot,
                   std::string(audit::markers::kTimedOut) + "no answer within " +
                       std::to_string(slot.session.config.answer_timeout.count()) + " s",
                   exam::Timeout{});
  return true;
}

std::size_t ExamService::expire_overdue() {
  std::vector<std::shared_ptr<Slot>> slots;
  {
    std::shared_lock lock(map_mutex_);
    slots.reserve(slots_.size());
    for (const auto& [_, slot] : slots_) slots.push_back(slot);
  }
  std::size_t expired = 0;
  for (const auto& slot : slots) {
    // A slot that is busy is being served by a request, which checks the
    // deadline itself.
    std::unique_lock work(slot->work, std::try_to_lock);
    if (work.owns_lock() && expire_if_overdue(*slot)) ++expired;
  }
  return expired;
}

void ExamService::start_reaper(std::chrono::milliseconds interval) {
  stop_reaper();
  {
    std::lock_guard lock(reaper_mutex_);
    reaper_stop_ = false;
  }
  reaper_ = std::thread([this, interval] {
    std::unique_lock lock(reaper_mutex_);
    while (!reaper_cv_.wait_for(lock, interval, [this] { return reaper_stop_; })) {
      lock.unlock();
      try {
        expire_overdue();
      } catch (const std::exception&) {
        // Storage trouble surfaces on the next request for that session.
      }
      lock.lock();
    }
  });
}

void ExamService::stop_reaper() {
  {
    std::lock_guard lock(reaper_mutex_);
    reaper_stop_ = true;
  }
  reaper_cv_.notify_all();
  if (reaper_.joinable()) reaper_.join();
}

SessionSummary ExamService::summarize(const Slot& slot) const {
  std::lock_guard view(slot.view);
  const auto& s = slot.session;
  SessionSummary out;
  out.session_id = s.session_id;
  out.state = s.state;
  out.questions_asked = s.questions_asked;
  out.questions_remaining = exam::question_budget_remaining(s);
  out.flag_count = slot.flag_count;
  out.high_flag_count = slot.high_flag_count;
  out.created_at = s.created_at;
  out.concluded_at = s.concluded_at;
  if (s.state == exam::SessionState::kAwaitingAnswer) {
    out.current_question = last_question(s);
  }
  return out;
}

std::vector<SessionSummary> ExamService::list() const {
  std::vector<std::shared_ptr<Slot>> slots;
  {
    std::shared_lock lock(map_mutex_);
    slots.reserve(order_.size());
    for (const auto& id : order_) slots.push_back(slots_.at(id));
  }
  std::vector<SessionSummary> out;
  out.reserve(slots.size());
  for (const auto& slot : slots) out.push_back(summarize(*slot));
  return out;
}

SessionSummary ExamService::summary(const std::string& session_id) const {
  return summarize(*find(session_id));
}

exam::ExamSession ExamService::snapshot(const std::string& session_id) const {
  auto slot = find(session_id);
  std::lock_guard view(slot->view);
  return slot->session;
}

AssessmentReport ExamService::assessment(const std::string& session_id) const {
  auto slot = find(session_id);
  AssessmentReport report;
  {
    std::lock_guard view(slot->view);
    const auto& s = slot->session;
    if (!exam::is_terminal(s.state)) {
      throw Error(ErrorCode::kNotConcluded, "session has not concluded (state " +
                                                std::string(exam::to_string(s.state)) + ")");
    }
    report.session_id = s.session_id;
    report.state = s.state;
    report.questions_asked = s.questions_asked;
    report.verdict = s.verdict;
    report.abort_reason = s.abort_reason;
    report.has_transcript = slot->has_transcript;
  }
  if (report.has_transcript) {
    report.flags = store_.submission(session_id).sanitized.flags;
    report.chain = store_.verify_chain(session_id);
  } else {
    report.chain.detail = "no transcript: the session ended before a submission was accepted";
  }
  return report;
}

bool ExamService::wait_for_transcript(const std::string& session_id,
                                      std::chrono::milliseconds wait) const {
  auto slot = find(session_id);
  const auto ready = [&] {
    std::lock_guard view(slot->view);
    return slot->has_transcript || exam::is_terminal(slot->session.state);
  };
  std::unique_lock lock(transcript_mutex_);
  transcript_cv_.wait_for(lock, wait, ready);
  std::lock_guard view(slot->view);
  return slot->has_transcript;
}

}  // namespace viva::service
