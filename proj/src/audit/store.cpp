#include "viva/audit/store.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include "viva/json_io.h"

namespace viva::audit {
namespace {

constexpr std::string_view kExportFormat = "viva-transcript/1";

[[noreturn]] void storage_failure(const std::string& what) {
  throw Error(ErrorCode::kStorageFailure, what);
}

[[noreturn]] void unknown_session(const std::string& id) {
  throw Error(ErrorCode::kUnknownSession, "unknown session: " + id);
}

class MemoryBackend final : public StorageBackend {
 public:
  void create(const std::string& id, const std::string& header_json,
              const std::string& submission_json) override {
    std::lock_guard lock(mutex_);
    if (records_.count(id)) storage_failure("transcript already exists: " + id);
    records_[id] = Record{header_json, submission_json, {}, false};
  }

  void append_line(const std::string& id, const std::string& line) override {
    std::lock_guard lock(mutex_);
    at(id).lines.push_back(line);
  }

  void mark_sealed(const std::string& id) override {
    std::lock_guard lock(mutex_);
    at(id).sealed = true;
  }

  bool exists(const std::string& id) const override {
    std::lock_guard lock(mutex_);
    return records_.count(id) != 0;
  }

  std::string read_header(const std::string& id) const override {
    std::lock_guard lock(mutex_);
    return at(id).header;
  }

  std::string read_submission(const std::string& id) const override {
    std::lock_guard lock(mutex_);
    return at(id).submission;
  }

  std::vector<std::string> read_lines(const std::string& id) const override {
    std::lock_guard lock(mutex_);
    return at(id).lines;
  }

  bool is_sealed(const std::string& id) const override {
    std::lock_guard lock(mutex_);
    return at(id).sealed;
  }

  std::vector<std::string> list() const override {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : records_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

 private:
  struct Record {
    std::string header;
    std::string submission;
    std::vector<std::string> lines;
    bool sealed = false;
  };

  Record& at(const std::string& id) {
    auto it = records_.find(id);
    if (it == records_.end()) unknown_session(id);
    return it->second;
  }
  const Record& at(const std::string& id) const {
    auto it = records_.find(id);
    if (it == records_.end()) unknown_session(id);
    return it->second;
  }

  mutable std::mutex mutex_;
  std::unordered_map<std::string, Record> records_;
};

class DirectoryBackend final : public StorageBackend {
 public:
  DirectoryBackend(std::filesystem::path root, bool sync) : root_(std::move(root)), sync_(sync) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) storage_failure("cannot create store directory " + root_.string() + ": " + ec.message());
  }

  void create(const std::string& id, const std::string& header_json,
              const std::string& submission_json) override {
    const auto dir = root_ / id;
    std::error_code ec;
    if (!std::filesystem::create_directory(dir, ec)) {
      storage_failure("cannot create transcript directory " + dir.string() +
                      (ec ? ": " + ec.message() : ": already exists"));
    }
    write_file(dir / "submission.json", submission_json);
    // The header is written last; its presence marks a complete transcript.
    write_file(dir / "header.json", header_json);
  }

  void append_line(const std::string& id, const std::string& line) override {
    const auto path = root_ / id / "entries.jsonl";
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) storage_failure("cannot open " + path.string() + ": " + std::strerror(errno));
    std::string record = line;
    record.push_back('\n');
    const char* data = record.data();
    std::size_t left = record.size();
    while (left > 0) {
      const ssize_t n = ::write(fd, data, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        const std::string why = std::strerror(errno);
        ::close(fd);
        storage_failure("write to " + path.string() + " failed: " + why);
      }
      data += n;
      left -= static_cast<std::size_t>(n);
    }
    if (sync_ && ::fsync(fd) != 0) {
      const std::string why = std::strerror(errno);
      ::close(fd);
      storage_failure("fsync of " + path.string() + " failed: " + why);
    }
    ::close(fd);
  }

  void mark_sealed(const std::string& id) override { write_file(root_ / id / "SEALED", ""); }

  bool exists(const std::string& id) const override {
    return std::filesystem::exists(root_ / id / "header.json");
  }

  std::string read_header(const std::string& id) const override {
    return read_file(root_ / id / "header.json", id);
  }

  std::string read_submission(const std::string& id) const override {
    return read_file(root_ / id / "submission.json", id);
  }

  std::vector<std::string> read_lines(const std::string& id) const override {
    if (!exists(id)) unknown_session(id);
    std::vector<std::string> lines;
    std::ifstream in(root_ / id / "entries.jsonl", std::ios::binary);
    for (std::string line; std::getline(in, line);) {
      lines.push_back(std::move(line));
    }
    return lines;
  }

  bool is_sealed(const std::string& id) const override {
    return std::filesystem::exists(root_ / id / "SEALED");
  }

  std::vector<std::string> list() const override {
    std::vector<std::string> ids;
    for (const auto& dirent : std::filesystem::directory_iterator(root_)) {
      const std::string name = dirent.path().filename().string();
      if (dirent.is_directory() && is_valid_session_id(name) && exists(name)) {
        ids.push_back(name);
      }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

 private:
  void write_file(const std::filesystem::path& path, const std::string& data) const {
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << data;
      out.flush();
      if (!out) storage_failure("cannot write " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) storage_failure("cannot rename " + tmp + ": " + ec.message());
  }

  std::string read_file(const std::filesystem::path& path, const std::string& id) const {
    std::ifstream in(path, std::ios::binary);
    if (!in) unknown_session(id);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  std::filesystem::path root_;
  bool sync_;
};

std::optional<FinalAssessment> verdict_of(const std::vector<TranscriptEntry>& entries) {
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->role != Role::kVerdict) continue;
    const auto j = nlohmann::json::parse(it->content, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    try {
      return FinalAssessment{j.at("assessment").get<std::string>(),
                             j.at("confidence_score").get<int>()};
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::optional<VerificationReport> check_genesis(const TranscriptHeader& header,
                                                const SubmissionRecord& submission,
                                                const std::vector<TranscriptEntry>& entries) {
  if (entries.empty()) return std::nullopt;
  const auto fail = [](std::string detail, std::string expected, std::string found) {
    VerificationReport r;
    r.valid = false;
    r.broken_seq = 0;
    r.detail = std::move(detail);
    r.expected = std::move(expected);
    r.found = std::move(found);
    return r;
  };
  const auto digests = genesis_digests(entries.front().content);
  if (!digests) {
    return fail("genesis entry does not record header and submission digests", "", "");
  }
  if (const auto h = header_digest(header); h != digests->header) {
    return fail("transcript header does not match the digest in the genesis entry",
                digests->header, h);
  }
  if (const auto r = submission_record_digest(submission); r != digests->record) {
    return fail("submission record does not match the digest in the genesis entry",
                digests->record, r);
  }
  if (const auto raw = sha256_hex(submission.raw); raw != submission.sanitized.original_digest) {
    return fail("stored raw submission does not match original_digest",
                submission.sanitized.original_digest, raw);
  }
  return std::nullopt;
}

}  // namespace

std::unique_ptr<StorageBackend> memory_backend() { return std::make_unique<MemoryBackend>(); }

std::unique_ptr<StorageBackend> directory_backend(const std::filesystem::path& root, bool sync) {
  return std::make_unique<DirectoryBackend>(root, sync);
}

bool is_valid_session_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
           c == '_';
  });
}

struct TranscriptStore::Log {
  std::string session_id;
  TranscriptHeader header;
  SubmissionRecord submission;
  mutable std::mutex mutex;
  std::condition_variable cv;
  std::vector<TranscriptEntry> entries;
  bool sealed = false;
};

TranscriptStore::TranscriptStore(std::unique_ptr<StorageBackend> backend)
    : backend_(std::move(backend)) {
  for (const std::string& id : backend_->list()) {
    auto log = std::make_shared<Log>();
    log->session_id = id;
    try {
      log->header = header_from_json(nlohmann::json::parse(backend_->read_header(id)));
      log->submission = submission_from_json(nlohmann::json::parse(backend_->read_submission(id)));
    } catch (const std::exception&) {
      continue;  // incomplete transcript directory; not a session
    }
    log->sealed = backend_->is_sealed(id);
    for (const std::string& line : backend_->read_lines(id)) {
      try {
        log->entries.push_back(parse_entry(line));
      } catch (const Error&) {
        // Damaged storage: keep the readable prefix and refuse further appends.
        log->sealed = true;
        break;
      }
    }
    logs_.emplace(id, std::move(log));
  }
}

TranscriptStore::~TranscriptStore() = default;

std::shared_ptr<TranscriptStore::Log> TranscriptStore::find(const std::string& session_id) const {
  std::shared_lock lock(map_mutex_);
  auto it = logs_.find(session_id);
  if (it == logs_.end()) unknown_session(session_id);
  return it->second;
}

void TranscriptStore::open_transcript(const TranscriptHeader& header,
                                      const SubmissionRecord& submission) {
  if (!is_valid_session_id(header.session_id)) {
    storage_failure("invalid session id: " + header.session_id);
  }
  std::unique_lock lock(map_mutex_);
  if (logs_.count(header.session_id)) {
    storage_failure("transcript already exists: " + header.session_id);
  }
  backend_->create(header.session_id, to_json(header).dump(), to_json(submission).dump());
  auto log = std::make_shared<Log>();
  log->session_id = header.session_id;
  log->header = header;
  log->submission = submission;
  logs_.emplace(header.session_id, std::move(log));
}

TranscriptEntry TranscriptStore::append(const std::string& session_id, Role role,
                                        std::string content, Timestamp at) {
  auto log = find(session_id);
  std::lock_guard lock(log->mutex);
  if (log->sealed) {
    throw Error(ErrorCode::kSessionSealed, "transcript is sealed: " + session_id);
  }
  TranscriptEntry entry;
  entry.session_id = session_id;
  entry.seq = log->entries.size();
  entry.timestamp = at;
  entry.role = role;
  entry.content = std::move(content);
  entry.prev_hash = log->entries.empty() ? kZeroHash : log->entries.back().entry_hash;
  entry.entry_hash = compute_entry_hash(entry);

  backend_->append_line(session_id, serialize_entry(entry));
  if (role == Role::kVerdict) {
    backend_->mark_sealed(session_id);
    log->sealed = true;
  }
  log->entries.push_back(entry);
  log->cv.notify_all();
  return entry;
}

void TranscriptStore::seal(const std::string& session_id) {
  auto log = find(session_id);
  std::lock_guard lock(log->mutex);
  if (log->sealed) return;
  backend_->mark_sealed(session_id);
  log->sealed = true;
  log->cv.notify_all();
}

bool TranscriptStore::contains(const std::string& session_id) const {
  std::shared_lock lock(map_mutex_);
  return logs_.count(session_id) != 0;
}

bool TranscriptStore::is_sealed(const std::string& session_id) const {
  auto log = find(session_id);
  std::lock_guard lock(log->mutex);
  return log->sealed;
}

std::vector<std::string> TranscriptStore::session_ids() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> ids;
  ids.reserve(logs_.size());
  for (const auto& [id, _] : logs_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<TranscriptEntry> TranscriptStore::entries(const std::string& session_id) const {
  auto log = find(session_id);
  std::lock_guard lock(log->mutex);
  return log->entries;
}

TranscriptHeader TranscriptStore::header(const std::string& session_id) const {
  return find(session_id)->header;
}

SubmissionRecord TranscriptStore::submission(const std::string& session_id) const {
  return find(session_id)->submission;
}

VerificationReport TranscriptStore::verify_chain(const std::string& session_id) const {
  auto log = find(session_id);
  const std::vector<std::string> lines = backend_->read_lines(session_id);
  VerificationReport report = verify_lines(session_id, lines);
  if (!report.valid || lines.empty()) return report;

  TranscriptHeader header;
  SubmissionRecord submission;
  try {
    header = header_from_json(nlohmann::json::parse(backend_->read_header(session_id)));
    submission = submission_from_json(nlohmann::json::parse(backend_->read_submission(session_id)));
  } catch (const std::exception& ex) {
    VerificationReport r;
    r.valid = false;
    r.broken_seq = 0;
    r.detail = std::string("stored header or submission is unreadable: ") + ex.what();
    return r;
  }
  const std::vector<TranscriptEntry> first{parse_entry(lines.front())};
  if (auto failure = check_genesis(header, submission, first)) return *failure;
  return report;
}

std::string TranscriptStore::export_document(const std::string& session_id,
                                             std::string_view format) const {
  auto log = find(session_id);
  std::vector<TranscriptEntry> entries;
  bool sealed = false;
  {
    std::lock_guard lock(log->mutex);
    entries = log->entries;
    sealed = log->sealed;
  }
  if (format == "json") return export_json(log->header, log->submission, entries, sealed);
  if (format == "text") return export_text(log->header, log->submission, entries, sealed);
  throw Error(ErrorCode::kUnsupportedFormat, "unsupported export format: " + std::string(format));
}

Subscription TranscriptStore::subscribe(const std::string& session_id, std::uint64_t from_seq) const {
  return Subscription(find(session_id), from_seq);
}

Subscription::Next Subscription::next(std::chrono::milliseconds wait) {
  std::unique_lock lock(log_->mutex);
  log_->cv.wait_for(lock, wait, [&] { return log_->entries.size() > cursor_ || log_->sealed; });
  if (log_->entries.size() > cursor_) {
    return Next{Status::kEntry, log_->entries[cursor_++]};
  }
  if (log_->sealed) return Next{Status::kEnd, std::nullopt};
  return Next{Status::kTimeout, std::nullopt};
}

std::string export_json(const TranscriptHeader& header, const SubmissionRecord& submission,
                        const std::vector<TranscriptEntry>& entries, bool sealed) {
  nlohmann::json doc;
  doc["format"] = kExportFormat;
  doc["header"] = to_json(header);
  doc["submission"] = to_json(submission);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : entries) list.push_back(to_json(e));
  doc["entries"] = std::move(list);
  doc["sealed"] = sealed;
  const auto verdict = verdict_of(entries);
  doc["verdict"] = verdict ? to_json(*verdict) : nlohmann::json(nullptr);
  return doc.dump(2) + "\n";
}

std::string export_text(const TranscriptHeader& header, const SubmissionRecord& submission,
                        const std::vector<TranscriptEntry>& entries, bool sealed) {
  std::ostringstream out;
  out << "=== TRANSCRIPT HEADER ===\n"
      << "session_id: " << header.session_id << "\n"
      << "created_at: " << format_timestamp(header.created_at) << "\n"
      << "questions: " << header.config.min_questions << "-" << header.config.max_questions << "\n"
      << "academic_context: " << header.config.academic_context << "\n"
      << "provider: " << header.provider.id << " (" << header.provider.model << ")\n"
      << "submission_sha256: " << header.submission_digest << "\n"
      << "submission_words: " << submission.sanitized.word_count << "\n"
      << "integrity_flags: " << submission.sanitized.flags.size() << "\n"
      << "rules_version: " << header.rules_version << "\n"
      << "prompt_template_version: " << header.prompt_template_version << "\n"
      << "hash_algorithm: " << header.hash_algorithm << "\n"
      << "sealed: " << (sealed ? "yes" : "no") << "\n"
      << "=== END TRANSCRIPT HEADER ===\n";
  for (const auto& e : entries) {
    out << "\n[" << to_string(e.role) << "] " << e.content << "\n";
  }
  if (const auto verdict = verdict_of(entries)) {
    out << "\n=== VERDICT ===\n"
        << "confidence_score: " << verdict->confidence_score << "\n"
        << "assessment: " << verdict->assessment << "\n"
        << "=== END VERDICT ===\n";
  }
  return out.str();
}

ExportedTranscript parse_export(std::string_view document) {
  const auto doc = nlohmann::json::parse(document.begin(), document.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorCode::kParseError, "transcript export is not a JSON object");
  }
  try {
    if (doc.at("format").get<std::string>() != kExportFormat) {
      throw Error(ErrorCode::kParseError, "unknown transcript format");
    }
    ExportedTranscript t;
    t.header = header_from_json(doc.at("header"));
    t.submission = submission_from_json(doc.at("submission"));
    for (const auto& e : doc.at("entries")) t.entries.push_back(entry_from_json(e));
    t.sealed = doc.at("sealed").get<bool>();
    const auto& v = doc.at("verdict");
    if (!v.is_null()) {
      t.verdict = FinalAssessment{v.at("assessment").get<std::string>(),
                                  v.at("confidence_score").get<int>()};
    }
    return t;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParseError, std::string("malformed transcript export: ") + ex.what());
  }
}

VerificationReport verify_export(std::string_view document) {
  const ExportedTranscript t = parse_export(document);
  VerificationReport report = verify_entries(t.header.session_id, t.entries);
  if (!report.valid) return report;
  if (auto failure = check_genesis(t.header, t.submission, t.entries)) return *failure;

  const auto fail = [&](std::string detail) {
    VerificationReport r;
    r.valid = false;
    r.entries_checked = t.entries.size();
    r.broken_seq = t.entries.empty() ? 0 : t.entries.back().seq;
    r.detail = std::move(detail);
    return r;
  };
  if (t.header.submission_digest != t.submission.sanitized.original_digest) {
    return fail("header submission digest differs from the submission record");
  }
  if (t.verdict != verdict_of(t.entries)) {
    return fail("verdict field does not match the Verdict entry");
  }
  if (!t.entries.empty()) {
    const TranscriptEntry& last = t.entries.back();
    const std::string_view c = last.content;
    const bool terminal = last.role == Role::kVerdict ||
                          (last.role == Role::kSystem && (c.rfind(markers::kAborted, 0) == 0 ||
                                                          c.rfind(markers::kTimedOut, 0) == 0));
    if (terminal != t.sealed) {
      return fail(t.sealed ? "document claims to be sealed but has no terminal entry"
                           : "document ends with a terminal entry but is not marked sealed");
    }
  }
  if (export_json(t.header, t.submission, t.entries, t.sealed) != document) {
    return fail("document is not in canonical form");
  }
  return report;
}

}  // namespace viva::audit
