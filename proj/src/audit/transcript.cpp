#include "viva/audit/transcript.h"

#include <regex>
#include <sstream>

#include "viva/json_io.h"

namespace viva::audit {
namespace {

VerificationReport broken(std::uint64_t seq, std::string detail, std::string expected = {},
                          std::string found = {}) {
  VerificationReport r;
  r.valid = false;
  r.broken_seq = seq;
  r.detail = std::move(detail);
  r.expected = std::move(expected);
  r.found = std::move(found);
  return r;
}

// Chain checks shared by the line and entry forms.
std::optional<VerificationReport> check_link(std::string_view session_id, std::uint64_t position,
                                             const TranscriptEntry& e,
                                             const std::string& expected_prev) {
  if (e.seq != position) {
    return broken(position, "sequence gap: expected seq " + std::to_string(position) + ", found " +
                                std::to_string(e.seq));
  }
  if (e.session_id != session_id) {
    return broken(position, "entry belongs to session '" + e.session_id + "'");
  }
  if (e.prev_hash != expected_prev) {
    return broken(position, "prev_hash does not match the previous entry", expected_prev,
                  e.prev_hash);
  }
  const std::string computed = compute_entry_hash(e);
  if (e.entry_hash != computed) {
    return broken(position, "entry_hash mismatch", computed, e.entry_hash);
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "System";
    case Role::kExaminer: return "Examiner";
    case Role::kCandidate: return "Candidate";
    case Role::kVerdict: return "Verdict";
    case Role::kNote: return "Note";
  }
  return "System";
}

Role parse_role(std::string_view text) {
  for (Role r : {Role::kSystem, Role::kExaminer, Role::kCandidate, Role::kVerdict, Role::kNote}) {
    if (to_string(r) == text) return r;
  }
  throw Error(ErrorCode::kParseError, "unknown transcript role: " + std::string(text));
}

std::string compute_entry_hash(const TranscriptEntry& entry) {
  // nlohmann::json keeps keys sorted, so the dump is canonical.
  const nlohmann::json j = {{"content", entry.content},
                            {"prev_hash", entry.prev_hash},
                            {"role", to_string(entry.role)},
                            {"seq", entry.seq},
                            {"session_id", entry.session_id},
                            {"timestamp", format_timestamp(entry.timestamp)}};
  return sha256_hex(j.dump());
}

std::string serialize_entry(const TranscriptEntry& entry) { return to_json(entry).dump(); }

TranscriptEntry parse_entry(std::string_view line) {
  const auto j = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::kParseError, "transcript entry is not valid JSON");
  }
  return entry_from_json(j);
}

VerificationReport verify_lines(std::string_view session_id, const std::vector<std::string>& lines) {
  std::string expected_prev = kZeroHash;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto position = static_cast<std::uint64_t>(i);
    TranscriptEntry e;
    try {
      e = parse_entry(lines[i]);
    } catch (const Error& ex) {
      return broken(position, std::string("unreadable entry: ") + ex.what());
    }
    if (serialize_entry(e) != lines[i]) {
      return broken(position, "entry is not in canonical form", serialize_entry(e), lines[i]);
    }
    if (auto failure = check_link(session_id, position, e, expected_prev)) {
      failure->entries_checked = i;
      return *failure;
    }
    expected_prev = e.entry_hash;
  }
  VerificationReport ok;
  ok.entries_checked = lines.size();
  return ok;
}

VerificationReport verify_entries(std::string_view session_id,
                                  const std::vector<TranscriptEntry>& entries) {
  std::string expected_prev = kZeroHash;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (auto failure = check_link(session_id, i, entries[i], expected_prev)) {
      failure->entries_checked = i;
      return *failure;
    }
    expected_prev = entries[i].entry_hash;
  }
  VerificationReport ok;
  ok.entries_checked = entries.size();
  return ok;
}

std::string header_digest(const TranscriptHeader& header) {
  return sha256_hex(to_json(header).dump());
}

std::string submission_record_digest(const SubmissionRecord& record) {
  return sha256_hex(to_json(record).dump());
}

std::string submission_accepted_content(const TranscriptHeader& header,
                                        const SubmissionRecord& record) {
  const auto& submission = record.sanitized;
  std::ostringstream out;
  out << markers::kSubmissionAccepted << submission.word_count << " words, sha256 "
      << submission.original_digest << ", " << submission.flags.size() << " integrity flag"
      << (submission.flags.size() == 1 ? "" : "s") << " (rules " << header.rules_version
      << "). Header digest " << header_digest(header) << ", record digest "
      << submission_record_digest(record) << ".";
  return out.str();
}

std::optional<GenesisDigests> genesis_digests(std::string_view content) {
  static const std::regex pattern("Header digest ([0-9a-f]{64}), record digest ([0-9a-f]{64})\\.");
  std::match_results<std::string_view::const_iterator> m;
  if (content.substr(0, markers::kSubmissionAccepted.size()) != markers::kSubmissionAccepted ||
      !std::regex_search(content.begin(), content.end(), m, pattern)) {
    return std::nullopt;
  }
  return GenesisDigests{m[1].str(), m[2].str()};
}

std::string flag_note_content(const guard::InjectionFlag& flag) {
  std::ostringstream out;
  out << markers::kIntegrityFlag << flag.rule_id << " (" << guard::to_string(flag.severity)
      << ") at bytes " << flag.span.begin << "-" << flag.span.end << ": \"" << flag.excerpt
      << "\". " << flag.description;
  return out.str();
}

exam::ExamSession replay(const TranscriptHeader& header, const SubmissionRecord& submission,
                         const std::vector<TranscriptEntry>& entries) {
  exam::ExamSession session =
      exam::create_session(header.config, header.session_id, header.created_at);
  const auto starts_with = [](std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
  };
  for (const TranscriptEntry& e : entries) {
    std::optional<exam::EventPayload> payload;
    switch (e.role) {
      case Role::kExaminer:
        payload = exam::QuestionIssued{e.content};
        break;
      case Role::kCandidate:
        payload = exam::AnswerReceived{e.content};
        break;
      case Role::kVerdict: {
        const auto j = nlohmann::json::parse(e.content, nullptr, false);
        if (j.is_discarded()) {
          throw Error(ErrorCode::kParseError, "verdict entry is not valid JSON");
        }
        payload = exam::VerdictIssued{FinalAssessment{j.at("assessment").get<std::string>(),
                                                      j.at("confidence_score").get<int>()}};
        break;
      }
      case Role::kSystem:
        if (starts_with(e.content, markers::kSubmissionAccepted)) {
          payload = exam::SubmissionAccepted{
              std::make_shared<const guard::SanitizedSubmission>(submission.sanitized)};
        } else if (starts_with(e.content, markers::kAborted)) {
          payload = exam::Abort{e.content.substr(markers::kAborted.size())};
        } else if (starts_with(e.content, markers::kTimedOut)) {
          payload = exam::Timeout{};
        }
        break;
      case Role::kNote:
        break;
    }
    if (payload) {
      session = exam::transition(session, exam::SessionEvent{std::move(*payload), e.seq, e.timestamp});
    }
  }
  return session;
}

}  // namespace viva::audit
