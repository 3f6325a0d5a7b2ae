#include "viva/cli/commands.h"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "viva/audit/store.h"
#include "viva/json_io.h"
#include "viva/service/config.h"
#include "viva/service/exam_service.h"
#include "viva/service/http_server.h"

namespace viva::cli {
namespace {

std::optional<std::string> read_file(const std::string& path, std::ostream& err) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) {
    err << "error: no such file: " << path << "\n";
    return std::nullopt;
  }
  if (std::filesystem::is_directory(path, ec)) {
    err << "error: is a directory: " << path << "\n";
    return std::nullopt;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    err << "error: cannot read " << path << "\n";
    return std::nullopt;
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool write_file(const std::string& path, const std::string& data, std::ostream& err) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << data;
  out.flush();
  if (!out) {
    err << "error: cannot write " << path << "\n";
    return false;
  }
  return true;
}

void report(const Error& ex, std::ostream& err) {
  err << "error: " << to_string(ex.code()) << ": " << ex.what() << "\n";
}

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnsupportedFormat:
    case ErrorCode::kInvalidEncoding:
    case ErrorCode::kOversizeSubmission:
    case ErrorCode::kEmptySubmission:
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kParseError:
      return true;
    default:
      return false;
  }
}

std::optional<service::ServiceConfig> load_config(const std::string& path, std::ostream& err) {
  try {
    service::ServiceConfig config =
        path.empty() ? service::ServiceConfig{} : service::load_service_config(path);
    return service::with_environment(std::move(config));
  } catch (const Error& ex) {
    report(ex, err);
    return std::nullopt;
  }
}

std::unique_ptr<guard::RuleSet> load_rules(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_unique<guard::RuleSet>(guard::RuleSet::load(path));
}

std::string pad(std::string text, std::size_t width) {
  if (text.size() < width) text.append(width - text.size(), ' ');
  return text;
}

constexpr std::string_view kSimMarkerPrefix = "SIMMARK";

}  // namespace

std::string synthetic_essay(const std::string& marker, int sentences) {
  static const char* const kTemplates[] = {
      "The evidence gathered for %s suggests that regional trade networks shaped the growth of "
      "market towns over several generations.",
      "In the argument of %s the decline of common land is traced to enclosure acts rather than "
      "to any change in farming technique.",
      "A second strand of %s compares parish records with tax rolls to estimate how quickly "
      "households moved between villages.",
      "The essay %s then considers whether the price of grain responded more to weather or to "
      "the policies of distant governments.",
      "Critics of the approach in %s might object that surviving sources overrepresent "
      "wealthy landowners and their legal disputes.",
      "Finally %s concludes that local institutions adapted slowly but decisively once the "
      "costs of inaction became visible to everyone.",
      "Short sentence.",
  };
  constexpr int kCount = sizeof(kTemplates) / sizeof(kTemplates[0]);
  std::string essay;
  for (int i = 0; i < sentences; ++i) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), kTemplates[i % kCount], marker.c_str());
    if (!essay.empty()) essay += (i % 3 == 0) ? "\n\n" : " ";
    essay += buf;
  }
  return essay;
}

std::string scripted_answer(const std::string& question, bool honest, int index) {
  if (!honest) return index % 2 == 0 ? "I am not sure." : "It was in the reading.";
  std::ostringstream out;
  out << "In answer " << index + 1
      << ", I chose that passage because the sources I read pointed in that direction, and I "
         "tried to weigh the parish evidence against the tax records before settling on the "
         "claim. I would revise it to acknowledge the gaps in the surviving material";
  if (question.size() > 200) out << " and the length of the passage quoted";
  out << ".";
  return out.str();
}

int run_exam(const RunOptions& options, std::istream& in, std::ostream& out, std::ostream& err) {
  const auto bytes = read_file(options.submission_path, err);
  if (!bytes) return kExitInput;
  const auto config = load_config(options.config_path, err);
  if (!config) return kExitInput;

  exam::ExamConfig exam_config;
  exam_config.min_questions = options.min_questions;
  exam_config.max_questions = options.max_questions;
  exam_config.academic_context = options.context;
  exam_config.answer_timeout = std::chrono::seconds(options.answer_timeout_seconds);
  exam_config.provider_id = options.provider;
  exam_config.max_provider_retries = options.max_provider_retries;

  std::unique_ptr<guard::RuleSet> rules;
  service::ServiceOptions service_options;
  try {
    exam::validate(exam_config);
    rules = load_rules(config->rules_path);
    service_options.rules = rules.get();
    if (!options.fixed_clock.empty()) {
      service_options.clock =
          stepping_clock(parse_timestamp(options.fixed_clock), std::chrono::seconds(1));
    }
  } catch (const Error& ex) {
    report(ex, err);
    return kExitInput;
  }
  if (!options.session_id.empty()) {
    if (!audit::is_valid_session_id(options.session_id)) {
      err << "error: invalid session id: " << options.session_id << "\n";
      return kExitInput;
    }
    service_options.id_generator = service::fixed_id_generator(options.session_id);
  }
  service_options.provider_factory = service::default_provider_factory(config->provider);
  service_options.max_submission_bytes = config->max_submission_bytes;

  audit::TranscriptStore store;
  service::ExamService exams(store, service_options);
  std::string id;
  try {
    id = exams.create_session(exam_config);
  } catch (const Error& ex) {
    report(ex, err);
    return kExitInput;
  }

  const std::string output = options.output_path.empty()
                                 ? options.submission_path + ".transcript.json"
                                 : options.output_path;
  const auto finish = [&](int code) {
    if (store.contains(id)) {
      if (!write_file(output, store.export_document(id, "json"), err)) return kExitFailure;
      out << "Transcript written to " << output << "\n";
    }
    return code;
  };

  std::string question;
  int number = 0;
  try {
    const auto first = exams.submit(id, *bytes, "text/plain");
    question = first.question;
    number = first.question_number;
  } catch (const Error& ex) {
    report(ex, err);
    return finish(is_input_error(ex.code()) ? kExitInput : kExitFailure);
  }

  out << "Session " << id << ": examining " << options.submission_path << " ("
      << exam_config.min_questions << "-" << exam_config.max_questions << " questions).\n";
  for (;;) {
    out << "\nQuestion " << number << " of at most " << exam_config.max_questions << ":\n"
        << question << "\n> " << std::flush;
    std::string line;
    if (!std::getline(in, line)) {
      out << "\n";
      err << "error: input ended before the examination concluded; session aborted\n";
      exams.abort(id, "candidate input ended before the examination concluded");
      return finish(kExitFailure);
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      out << "(an answer is required)\n";
      continue;
    }
    try {
      service::AnswerResult r;
      for (int attempt = 1;; ++attempt) {
        try {
          r = exams.answer(id, line);
          break;
        } catch (const Error& ex) {
          if (ex.code() != ErrorCode::kProviderUnavailable || attempt == 3) throw;
          err << "warning: provider unavailable, retrying\n";
        }
      }
      if (r.concluded) break;
      question = r.question;
      number = r.question_number;
    } catch (const Error& ex) {
      report(ex, err);
      if (ex.code() == ErrorCode::kInvalidEncoding) continue;
      if (!exam::is_terminal(exams.summary(id).state)) exams.abort(id, ex.what());
      return finish(kExitFailure);
    }
  }

  out << "\nExamination concluded.\n";
  if (options.show_verdict) {
    const auto verdict = exams.snapshot(id).verdict;
    if (verdict) out << to_verdict_json(*verdict) << "\n";
  }
  return finish(kExitOk);
}

int simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err) {
  if (options.sessions < 0 || options.jobs < 1) {
    err << "error: --sessions must be >= 0 and --jobs >= 1\n";
    return kExitInput;
  }
  const bool honest = options.answers == "honest";
  exam::ExamConfig exam_config;
  exam_config.min_questions = options.min_questions;
  exam_config.max_questions = options.max_questions;
  try {
    exam::validate(exam_config);
  } catch (const Error& ex) {
    report(ex, err);
    return kExitInput;
  }

  std::unique_ptr<audit::TranscriptStore> store;
  try {
    store = options.store_path.empty()
                ? std::make_unique<audit::TranscriptStore>()
                : std::make_unique<audit::TranscriptStore>(
                      audit::directory_backend(options.store_path, false));
  } catch (const Error& ex) {
    report(ex, err);
    return kExitInput;
  }
  service::ExamService exams(*store);

  struct Row {
    std::string marker;
    std::string session_id;
    std::string state = "Failed";
    int questions = 0;
    std::optional<int> score;
    std::string problem;
  };
  std::vector<Row> rows(static_cast<std::size_t>(options.sessions));
  std::atomic<int> next{0};

  const auto worker = [&] {
    for (int i = next++; i < options.sessions; i = next++) {
      Row& row = rows[static_cast<std::size_t>(i)];
      std::ostringstream marker;
      marker << kSimMarkerPrefix << std::setw(6) << std::setfill('0') << i;
      row.marker = marker.str();
      try {
        row.session_id = exams.create_session(exam_config);
        auto r = exams.submit(row.session_id, synthetic_essay(row.marker, 5 + i % 7), "text/plain");
        std::string question = r.question;
        for (int k = 0; k <= exam_config.max_questions; ++k) {
          const auto a = exams.answer(row.session_id, scripted_answer(question, honest, k));
          if (a.concluded) break;
          question = a.question;
        }
      } catch (const Error& ex) {
        row.problem = std::string(to_string(ex.code())) + ": " + ex.what();
      }
    }
  };
  std::vector<std::thread> threads;
  const int jobs = std::min(options.jobs, std::max(options.sessions, 1));
  for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  // Protocol invariants, checked from the stored transcripts.
  int completed = 0;
  int violations = 0;
  for (Row& row : rows) {
    if (row.session_id.empty()) {
      ++violations;
      continue;
    }
    const auto session = exams.snapshot(row.session_id);
    row.state = std::string(exam::to_string(session.state));
    row.questions = session.questions_asked;
    if (session.verdict) row.score = session.verdict->confidence_score;
    if (session.state == exam::SessionState::kCompleted) ++completed;
    if (!store->contains(row.session_id)) {
      if (row.problem.empty()) row.problem = "no transcript";
      ++violations;
      continue;
    }
    const auto entries = store->entries(row.session_id);
    int verdicts = 0;
    std::optional<audit::Role> last_role;
    for (const auto& e : entries) {
      if (e.role == audit::Role::kVerdict) ++verdicts;
      if (e.role != audit::Role::kNote) last_role = e.role;
      for (std::size_t pos = e.content.find(kSimMarkerPrefix); pos != std::string::npos;
           pos = e.content.find(kSimMarkerPrefix, pos + 1)) {
        if (e.content.compare(pos, row.marker.size(), row.marker) != 0) {
          row.problem = "foreign submission marker in seq " + std::to_string(e.seq);
        }
      }
    }
    if (session.state == exam::SessionState::kCompleted) {
      if (row.questions < exam_config.min_questions || row.questions > exam_config.max_questions) {
        row.problem = "question count outside the budget";
      } else if (verdicts != 1 || last_role != audit::Role::kVerdict) {
        row.problem = "verdict missing, repeated or not last";
      }
    }
    if (!store->verify_chain(row.session_id).valid) row.problem = "hash chain invalid";
    if (!row.problem.empty()) ++violations;
  }

  if (!options.quiet) {
    out << pad("session", 18) << pad("state", 18) << pad("questions", 11) << "score\n";
    for (const Row& row : rows) {
      out << pad(row.session_id.empty() ? "-" : row.session_id, 18) << pad(row.state, 18)
          << pad(std::to_string(row.questions), 11)
          << (row.score ? std::to_string(*row.score) : std::string("-"));
      if (!row.problem.empty()) out << "  ! " << row.problem;
      out << "\n";
    }
  }
  out << options.sessions << " sessions: " << completed << " completed, " << violations
      << " with problems\n";
  return completed == options.sessions && violations == 0 ? kExitOk : kExitFailure;
}

int verify(const std::string& transcript_path, std::ostream& out, std::ostream& err) {
  const auto document = read_file(transcript_path, err);
  if (!document) return kExitInput;
  audit::VerificationReport report;
  try {
    report = audit::verify_export(*document);
  } catch (const Error& ex) {
    err << "parse error: " << ex.what() << "\n";
    return kExitInput;
  }
  if (report.valid) {
    out << "valid: " << report.entries_checked << " entries, hash chain intact\n";
    return kExitOk;
  }
  out << "TAMPERED";
  if (report.broken_seq) out << ": broken at seq " << *report.broken_seq;
  out << ": " << report.detail << "\n";
  if (!report.expected.empty() || !report.found.empty()) {
    out << "  expected " << report.expected << "\n  found    " << report.found << "\n";
  }
  return kExitTamper;
}

int scan(const std::string& path, const std::string& rules_path, bool as_json, std::ostream& out,
         std::ostream& err) {
  const auto bytes = read_file(path, err);
  if (!bytes) return kExitInput;
  guard::SanitizedSubmission result;
  try {
    const auto rules = load_rules(rules_path);
    const auto raw = guard::ingest(*bytes, "text/plain", Timestamp{});
    result = guard::sanitize(raw, rules ? *rules : guard::RuleSet::builtin());
  } catch (const Error& ex) {
    report(ex, err);
    return kExitInput;
  }
  if (as_json) {
    nlohmann::json flags = nlohmann::json::array();
    for (const auto& f : result.flags) flags.push_back(to_json(f));
    out << nlohmann::json{{"path", path},
                          {"sha256", result.original_digest},
                          {"word_count", result.word_count},
                          {"flags", flags}}
               .dump(2)
        << "\n";
  } else if (result.flags.empty()) {
    out << "no flags\n";
  } else {
    for (const auto& f : result.flags) {
      out << f.rule_id << " [" << guard::to_string(f.severity) << "] bytes " << f.span.begin
          << "-" << f.span.end << ": \"" << f.excerpt << "\"\n";
    }
    out << result.flags.size() << " flag" << (result.flags.size() == 1 ? "" : "s") << "\n";
  }
  return result.flags.empty() ? kExitOk : kExitFlagged;
}

int export_transcript(const ExportOptions& options, std::ostream& out, std::ostream& err) {
  if (options.format != "json" && options.format != "text") {
    err << "error: unsupported format: " << options.format << "\n";
    return kExitInput;
  }
  std::string document;
  try {
    if (!options.transcript_path.empty()) {
      const auto text = read_file(options.transcript_path, err);
      if (!text) return kExitInput;
      const auto t = audit::parse_export(*text);
      document = options.format == "json"
                     ? audit::export_json(t.header, t.submission, t.entries, t.sealed)
                     : audit::export_text(t.header, t.submission, t.entries, t.sealed);
    } else if (!options.store_path.empty() && !options.session_id.empty()) {
      if (!std::filesystem::is_directory(options.store_path)) {
        err << "error: no such store directory: " << options.store_path << "\n";
        return kExitInput;
      }
      audit::TranscriptStore store(audit::directory_backend(options.store_path, false));
      document = store.export_document(options.session_id, options.format);
    } else {
      err << "error: give a transcript file, or --store and --session\n";
      return kExitInput;
    }
  } catch (const Error& ex) {
    report(ex, err);
    return ex.code() == ErrorCode::kUnknownSession || is_input_error(ex.code()) ? kExitInput
                                                                                : kExitFailure;
  }
  if (options.output_path.empty()) {
    out << document;
    return kExitOk;
  }
  return write_file(options.output_path, document, err) ? kExitOk : kExitFailure;
}

int serve(const ServeOptions& options, std::ostream& out, std::ostream& err) {
  auto config = load_config(options.config_path, err);
  if (!config) return kExitInput;
  if (!options.host.empty()) config->host = options.host;
  if (options.port >= 0) config->port = options.port;
  if (config->tokens_path.empty()) {
    err << "error: no cohort tokens file configured (tokens_path or VIVA_TOKENS_PATH)\n";
    return kExitInput;
  }

  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    service::TokenRegistry tokens = service::TokenRegistry::load(config->tokens_path);
    const auto rules = load_rules(config->rules_path);
    auto backend = config->store_path.empty()
                       ? audit::memory_backend()
                       : audit::directory_backend(config->store_path, config->store_sync);
    if (config->store_path.empty()) {
      err << "warning: no store_path configured; transcripts are kept in memory only\n";
    }
    audit::TranscriptStore store(std::move(backend));

    service::ServiceOptions service_options;
    service_options.rules = rules.get();
    service_options.provider_factory = service::default_provider_factory(config->provider);
    service_options.max_submission_bytes = config->max_submission_bytes;
    service::ExamService exams(store, service_options);

    service::HttpServerOptions http_options;
    http_options.defaults = config->defaults;
    http_options.threads = config->threads;
    http_options.cors_origin = config->cors_origin;
    http_options.max_body_bytes = config->max_submission_bytes + 64 * 1024;
    service::HttpServer server(exams, tokens, http_options);
    const int port = server.start(config->host, config->port);
    out << "listening on " << config->host << ":" << port << "\n" << std::flush;

    int received = 0;
    sigwait(&signals, &received);
    out << "shutting down\n" << std::flush;
    server.stop();
  } catch (const Error& ex) {
    report(ex, err);
    return is_input_error(ex.code()) ? kExitInput : kExitFailure;
  }
  return kExitOk;
}

int main_entry(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
               std::ostream& err) {
  CLI::App app{"Virtual viva voce examinations", "vivactl"};
  app.require_subcommand(1);

  RunOptions run_options;
  auto* run = app.add_subcommand("run", "Run an examination on this terminal");
  run->add_option("submission", run_options.submission_path, "Plain-text submission")->required();
  run->add_option("--provider", run_options.provider)->check(CLI::IsMember({"mock", "live"}));
  run->add_option("--min", run_options.min_questions, "Minimum number of questions");
  run->add_option("--max", run_options.max_questions, "Maximum number of questions");
  run->add_option("--context", run_options.context, "Academic context for the examiner");
  run->add_option("--timeout", run_options.answer_timeout_seconds, "Answer timeout in seconds");
  run->add_option("--retries", run_options.max_provider_retries, "Provider retries per turn");
  run->add_option("-o,--output", run_options.output_path, "Transcript path");
  run->add_option("--session-id", run_options.session_id, "Fixed session id");
  run->add_option("--fixed-clock", run_options.fixed_clock,
                  "Start of a deterministic 1 s clock (ISO-8601)");
  run->add_option("--config", run_options.config_path, "Service config file");
  run->add_flag("--show-verdict", run_options.show_verdict, "Print the verdict at the end");

  SimulateOptions sim_options;
  auto* sim = app.add_subcommand("simulate", "Run a cohort of scripted mock sessions");
  sim->add_option("--sessions", sim_options.sessions, "Number of sessions");
  sim->add_option("--answers", sim_options.answers)->check(CLI::IsMember({"honest", "terse"}));
  sim->add_option("--jobs", sim_options.jobs, "Concurrent workers");
  sim->add_option("--min", sim_options.min_questions);
  sim->add_option("--max", sim_options.max_questions);
  sim->add_option("--store", sim_options.store_path, "Transcript store directory");
  sim->add_flag("--quiet", sim_options.quiet, "Print only the summary line");

  std::string verify_path;
  auto* ver = app.add_subcommand("verify", "Verify an exported transcript");
  ver->add_option("transcript", verify_path)->required();

  std::string scan_path;
  std::string scan_rules;
  bool scan_json = false;
  auto* sc = app.add_subcommand("scan", "Scan a plain-text file for injection attempts");
  sc->add_option("path", scan_path)->required();
  sc->add_option("--rules", scan_rules, "Rules file (default: built-in)");
  sc->add_flag("--json", scan_json, "Machine-readable output");

  ExportOptions export_options;
  auto* ex = app.add_subcommand("export", "Render a transcript as text or canonical JSON");
  ex->add_option("transcript", export_options.transcript_path, "Exported JSON transcript");
  ex->add_option("--store", export_options.store_path, "Transcript store directory");
  ex->add_option("--session", export_options.session_id, "Session id within the store");
  ex->add_option("--format", export_options.format)->check(CLI::IsMember({"json", "text"}));
  ex->add_option("-o,--output", export_options.output_path);

  ServeOptions serve_options;
  auto* srv = app.add_subcommand("serve", "Run the HTTP service");
  srv->add_option("--config", serve_options.config_path, "Service config file");
  srv->add_option("--host", serve_options.host);
  srv->add_option("--port", serve_options.port);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitInput;
  }

  if (*run) return run_exam(run_options, in, out, err);
  if (*sim) return simulate(sim_options, out, err);
  if (*ver) return verify(verify_path, out, err);
  if (*sc) return scan(scan_path, scan_rules, scan_json, out, err);
  if (*ex) return export_transcript(export_options, out, err);
  if (*srv) return serve(serve_options, out, err);
  return kExitInput;
}

}  // namespace viva::cli
