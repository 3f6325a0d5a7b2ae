#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace viva::cli {

// Exit-code contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitTamper = 1;
inline constexpr int kExitInput = 2;    // unreadable, unparsable or rejected input
inline constexpr int kExitFlagged = 3;
inline constexpr int kExitFailure = 4;  // aborted session, provider failure, invariant breach

struct RunOptions {
  std::string submission_path;
  std::string provider = "mock";
  int min_questions = 4;
  int max_questions = 5;
  std::string context;
  int answer_timeout_seconds = 600;
  int max_provider_retries = 2;
  std::string output_path;  // default: <submission>.transcript.json
  std::string session_id;   // default: random
  std::string fixed_clock;  // ISO-8601 start of a 1 s stepping clock
  std::string config_path;
  bool show_verdict = false;
};

/// Interactive examination on `in`/`out`. One answer per line; end of input
/// aborts the session.
int run_exam(const RunOptions& options, std::istream& in, std::ostream& out, std::ostream& err);

struct SimulateOptions {
  int sessions = 10;
  std::string answers = "honest";  // honest | terse
  int jobs = 8;
  int min_questions = 4;
  int max_questions = 5;
  std::string store_path;  // empty: in memory
  bool quiet = false;      // summary line only
};

int simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);

int verify(const std::string& transcript_path, std::ostream& out, std::ostream& err);

int scan(const std::string& path, const std::string& rules_path, bool as_json, std::ostream& out,
         std::ostream& err);

struct ExportOptions {
  std::string transcript_path;  // an exported JSON document, or
  std::string store_path;       // a transcript store plus
  std::string session_id;       // a session id
  std::string format = "text";
  std::string output_path;      // default: stdout
};

int export_transcript(const ExportOptions& options, std::ostream& out, std::ostream& err);

struct ServeOptions {
  std::string config_path;
  std::string host;
  int port = -1;
};

/// Blocks until SIGINT or SIGTERM.
int serve(const ServeOptions& options, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a subcommand.
int main_entry(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
               std::ostream& err);

/// Deterministic essay used by simulate: paragraphs of significant sentences
/// carrying `marker`.
std::string synthetic_essay(const std::string& marker, int sentences);

/// A scripted candidate answer; honest answers have at least 30 words.
std::string scripted_answer(const std::string& question, bool honest, int index);

}  // namespace viva::cli
