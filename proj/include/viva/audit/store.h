#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "viva/audit/transcript.h"

namespace viva::audit {

/// Durable storage for transcripts. One writer per session at a time;
/// different sessions may be written concurrently.
class StorageBackend {
 public:
  virtual ~StorageBackend() = default;

  virtual void create(const std::string& session_id, const std::string& header_json,
                      const std::string& submission_json) = 0;
  virtual void append_line(const std::string& session_id, const std::string& line) = 0;
  virtual void mark_sealed(const std::string& session_id) = 0;

  virtual bool exists(const std::string& session_id) const = 0;
  virtual std::string read_header(const std::string& session_id) const = 0;
  virtual std::string read_submission(const std::string& session_id) const = 0;
  virtual std::vector<std::string> read_lines(const std::string& session_id) const = 0;
  virtual bool is_sealed(const std::string& session_id) const = 0;
  virtual std::vector<std::string> list() const = 0;
};

std::unique_ptr<StorageBackend> memory_backend();

/// root/<session_id>/{header.json, submission.json, entries.jsonl, SEALED}.
/// Each append is flushed (and fsync'ed when `sync` is set) before returning.
std::unique_ptr<StorageBackend> directory_backend(const std::filesystem::path& root,
                                                  bool sync = true);

/// Session ids are restricted to [A-Za-z0-9_-]{1,64}.
bool is_valid_session_id(std::string_view id);

class Subscription;

/// Append-only, hash-chained transcript store.
class TranscriptStore {
 public:
  explicit TranscriptStore(std::unique_ptr<StorageBackend> backend = memory_backend());
  ~TranscriptStore();

  TranscriptStore(const TranscriptStore&) = delete;
  TranscriptStore& operator=(const TranscriptStore&) = delete;

  /// Writes the immutable header and submission record. Throws
  /// Error{kStorageFailure} if the session already has a transcript.
  void open_transcript(const TranscriptHeader& header, const SubmissionRecord& submission);

  /// Persists the next entry before returning it. A Verdict entry seals the
  /// session. Throws Error{kUnknownSession}, Error{kSessionSealed},
  /// Error{kStorageFailure}.
  TranscriptEntry append(const std::string& session_id, Role role, std::string content,
                         Timestamp at);

  /// Seals without a verdict (aborted sessions). Idempotent.
  void seal(const std::string& session_id);

  bool contains(const std::string& session_id) const;
  bool is_sealed(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;

  std::vector<TranscriptEntry> entries(const std::string& session_id) const;
  TranscriptHeader header(const std::string& session_id) const;
  SubmissionRecord submission(const std::string& session_id) const;

  /// Re-reads storage and recomputes the chain.
  VerificationReport verify_chain(const std::string& session_id) const;

  /// format: "json" (canonical) or "text". Throws Error{kUnknownSession},
  /// Error{kUnsupportedFormat}.
  std::string export_document(const std::string& session_id, std::string_view format) const;

  /// Delivers entries with seq >= from_seq, then live entries, and ends after
  /// the session is sealed.
  Subscription subscribe(const std::string& session_id, std::uint64_t from_seq) const;

  struct Log;

 private:
  std::shared_ptr<Log> find(const std::string& session_id) const;

  std::unique_ptr<StorageBackend> backend_;
  mutable std::shared_mutex map_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Log>> logs_;
};

class Subscription {
 public:
  enum class Status { kEntry, kEnd, kTimeout };

  struct Next {
    Status status = Status::kTimeout;
    std::optional<TranscriptEntry> entry;
  };

  /// Waits up to `wait` for the next entry.
  Next next(std::chrono::milliseconds wait);

  std::uint64_t cursor() const { return cursor_; }

 private:
  friend class TranscriptStore;
  Subscription(std::shared_ptr<TranscriptStore::Log> log, std::uint64_t from_seq)
      : log_(std::move(log)), cursor_(from_seq) {}

  std::shared_ptr<TranscriptStore::Log> log_;
  std::uint64_t cursor_;
};

/// Canonical JSON export built from already-loaded parts.
std::string export_json(const TranscriptHeader& header, const SubmissionRecord& submission,
                        const std::vector<TranscriptEntry>& entries, bool sealed);

std::string export_text(const TranscriptHeader& header, const SubmissionRecord& submission,
                        const std::vector<TranscriptEntry>& entries, bool sealed);

/// A parsed canonical JSON export.
struct ExportedTranscript {
  TranscriptHeader header;
  SubmissionRecord submission;
  std::vector<TranscriptEntry> entries;
  bool sealed = false;
  std::optional<FinalAssessment> verdict;
};

/// Throws Error{kParseError} on malformed or truncated documents.
ExportedTranscript parse_export(std::string_view document);

/// Full audit of an export: canonical encoding, hash chain, submission
/// digest, and verdict consistency. Throws Error{kParseError} when the
/// document cannot be parsed at all.
VerificationReport verify_export(std::string_view document);

}  // namespace viva::audit
