#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "viva/common.h"
#include "viva/exam/session.h"
#include "viva/guard/submission_guard.h"

namespace viva::audit {

enum class Role { kSystem, kExaminer, kCandidate, kVerdict, kNote };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

inline constexpr std::string_view kHashAlgorithm = "sha256";
inline const std::string kZeroHash(64, '0');

struct TranscriptEntry {
  std::string session_id;
  std::uint64_t seq = 0;
  Timestamp timestamp{};
  Role role = Role::kSystem;
  std::string content;
  std::string prev_hash;
  std::string entry_hash;

  bool operator==(const TranscriptEntry&) const = default;
};

/// sha256 over the canonical JSON of (content, prev_hash, role, seq,
/// session_id, timestamp).
std::string compute_entry_hash(const TranscriptEntry& entry);

/// Canonical single-line JSON form used in storage.
std::string serialize_entry(const TranscriptEntry& entry);

/// Throws Error{kParseError}.
TranscriptEntry parse_entry(std::string_view line);

struct ProviderInfo {
  std::string id;
  std::string model;

  bool operator==(const ProviderInfo&) const = default;
};

/// Written once, when the submission is accepted.
struct TranscriptHeader {
  std::string session_id;
  Timestamp created_at{};
  exam::ExamConfig config;
  std::string submission_digest;
  std::string rules_version;
  std::string prompt_template_version;
  std::string hash_algorithm{kHashAlgorithm};
  ProviderInfo provider;

  bool operator==(const TranscriptHeader&) const = default;
};

/// The submission as received and as sanitized; stored once beside the header.
struct SubmissionRecord {
  std::string raw;
  std::string declared_format;
  Timestamp received_at{};
  guard::SanitizedSubmission sanitized;

  bool operator==(const SubmissionRecord&) const = default;
};

struct VerificationReport {
  bool valid = true;
  std::size_t entries_checked = 0;
  std::optional<std::uint64_t> broken_seq;
  std::string expected;
  std::string found;
  std::string detail;
};

/// Checks stored entry lines for one session: canonical encoding, contiguous
/// seq from 0, session id, prev_hash linkage and entry_hash.
VerificationReport verify_lines(std::string_view session_id, const std::vector<std::string>& lines);

VerificationReport verify_entries(std::string_view session_id,
                                  const std::vector<TranscriptEntry>& entries);

// Content conventions for System and Note entries. Replay relies on them.
namespace markers {
inline constexpr std::string_view kSubmissionAccepted = "Submission accepted: ";
inline constexpr std::string_view kIntegrityFlag = "Integrity flag ";
inline constexpr std::string_view kConcluding = "Examination concluding: ";
inline constexpr std::string_view kAborted = "Session aborted: ";
inline constexpr std::string_view kTimedOut = "Session timed out: ";
}  // namespace markers

/// sha256 of the canonical JSON of the header / submission record. Both are
/// recorded in the genesis entry so they are covered by the chain.
std::string header_digest(const TranscriptHeader& header);
std::string submission_record_digest(const SubmissionRecord& record);

std::string submission_accepted_content(const TranscriptHeader& header,
                                        const SubmissionRecord& record);

struct GenesisDigests {
  std::string header;
  std::string record;
};

/// Extracts the digests from a genesis entry's content, if present.
std::optional<GenesisDigests> genesis_digests(std::string_view content);
std::string flag_note_content(const guard::InjectionFlag& flag);

/// Rebuilds a session purely from its stored transcript.
exam::ExamSession replay(const TranscriptHeader& header, const SubmissionRecord& submission,
                         const std::vector<TranscriptEntry>& entries);

}  // namespace viva::audit
