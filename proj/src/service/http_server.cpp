#include "viva/service/http_server.h"

#include <atomic>
#include <charconv>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "viva/json_io.h"

namespace viva::service {
namespace {

using nlohmann::json;

constexpr const char* kIdPattern = "([A-Za-z0-9_-]{1,64})";

std::string path(const char* suffix) { return std::string("/sessions/") + kIdPattern + suffix; }

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code,
                const std::string& message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

json chain_json(const audit::VerificationReport& r) {
  return {{"valid", r.valid},
          {"entries_checked", r.entries_checked},
          {"broken_seq", r.broken_seq ? json(*r.broken_seq) : json(nullptr)},
          {"expected", r.expected},
          {"found", r.found},
          {"detail", r.detail}};
}

json summary_json(const SessionSummary& s, bool for_student) {
  json j = {{"session_id", s.session_id},
            {"state", exam::to_string(s.state)},
            {"questions_asked", s.questions_asked},
            {"questions_remaining", s.questions_remaining}};
  if (s.current_question) j["current_question"] = *s.current_question;
  if (!for_student) {
    j["flag_count"] = s.flag_count;
    j["high_flag_count"] = s.high_flag_count;
    j["created_at"] = format_timestamp(s.created_at);
    j["concluded_at"] = s.concluded_at ? json(format_timestamp(*s.concluded_at)) : json(nullptr);
  }
  return j;
}

std::optional<std::size_t> parse_size(const std::string& text) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return value;
}

bool is_json_body(const httplib::Request& req) {
  const std::string type = req.get_header_value("Content-Type");
  return type.rfind("application/json", 0) == 0;
}

std::string sse_event(std::string_view event, std::optional<std::uint64_t> id,
                      const std::string& data) {
  std::string out;
  if (id) out += "id: " + std::to_string(*id) + "\n";
  out += "event: ";
  out += event;
  out += "\ndata: " + data + "\n\n";
  return out;
}

}  // namespace

std::string_view to_string(Endpoint endpoint) {
  switch (endpoint) {
    case Endpoint::kWhoAmI: return "GET /whoami";
    case Endpoint::kCreateSession: return "POST /sessions";
    case Endpoint::kListSessions: return "GET /sessions";
    case Endpoint::kSessionStatus: return "GET /sessions/{id}";
    case Endpoint::kSubmitWork: return "POST /sessions/{id}/submission";
    case Endpoint::kSubmitAnswer: return "POST /sessions/{id}/answers";
    case Endpoint::kEvents: return "GET /sessions/{id}/events";
    case Endpoint::kAssessment: return "GET /sessions/{id}/assessment";
    case Endpoint::kAbort: return "POST /sessions/{id}/abort";
    case Endpoint::kTranscript: return "GET /sessions/{id}/transcript";
  }
  return "";
}

bool role_allowed(PrincipalRole role, Endpoint endpoint) {
  using R = PrincipalRole;
  switch (endpoint) {
    case Endpoint::kWhoAmI:
    case Endpoint::kSessionStatus:
      return true;
    case Endpoint::kCreateSession:
    case Endpoint::kAssessment:
    case Endpoint::kTranscript:
      return role == R::kAssessor;
    case Endpoint::kListSessions:
    case Endpoint::kEvents:
      return role == R::kAssessor || role == R::kInvigilator;
    case Endpoint::kSubmitWork:
    case Endpoint::kSubmitAnswer:
      return role == R::kStudent;
    case Endpoint::kAbort:
      return role == R::kInvigilator;
  }
  return false;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kParseError:
    case ErrorCode::kInvalidEvent:
      return 400;
    case ErrorCode::kUnauthorized: return 403;
    case ErrorCode::kUnknownSession: return 404;
    case ErrorCode::kWrongState:
    case ErrorCode::kInvalidTransition:
    case ErrorCode::kSessionSealed:
    case ErrorCode::kNotConcluded:
    case ErrorCode::kPrematureVerdict:
      return 409;
    case ErrorCode::kOversizeSubmission: return 413;
    case ErrorCode::kUnsupportedFormat: return 415;
    case ErrorCode::kEmptySubmission:
    case ErrorCode::kInvalidEncoding:
    case ErrorCode::kEmptyAnswer:
      return 422;
    case ErrorCode::kProtocolExhausted:
    case ErrorCode::kStorageFailure:
      return 500;
    case ErrorCode::kProviderUnavailable: return 503;
  }
  return 500;
}

struct HttpServer::Impl {
  ExamService& service;
  TokenRegistry& tokens;
  HttpServerOptions options;
  httplib::Server server;
  std::thread thread;
  std::atomic<bool> stopping{false};

  Impl(ExamService& s, TokenRegistry& t, HttpServerOptions o)
      : service(s), tokens(t), options(std::move(o)) {
    const int threads = options.threads;
    server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    server.set_payload_max_length(options.max_body_bytes);
    routes();
  }

  using Handler = std::function<void(const Principal&, const httplib::Request&, httplib::Response&)>;

  // Authentication (401), then the allow table and student scope (403), then
  // the handler. Domain errors map through http_status().
  httplib::Server::Handler guarded(Endpoint endpoint, Handler handler) {
    return [this, endpoint, handler](const httplib::Request& req, httplib::Response& res) {
      const auto token = bearer_token(req.get_header_value("Authorization"));
      const auto principal = token ? tokens.find(*token) : std::nullopt;
      if (!principal) {
        res.set_header("WWW-Authenticate", "Bearer");
        send_error(res, 401, "Unauthenticated", "a valid bearer token is required");
        return;
      }
      if (!role_allowed(principal->role, endpoint)) {
        send_error(res, 403, "Forbidden",
                   std::string(to_string(principal->role)) + " may not call " +
                       std::string(to_string(endpoint)));
        return;
      }
      if (req.matches.size() > 1 && !principal->may_act_on(req.matches[1].str())) {
        send_error(res, 403, "Forbidden", "students may only act on their own session");
        return;
      }
      try {
        handler(*principal, req, res);
      } catch (const Error& ex) {
        send_error(res, http_status(ex.code()), to_string(ex.code()), ex.what());
      } catch (const std::exception& ex) {
        send_error(res, 500, "InternalError", ex.what());
      }
    };
  }

  void routes() {
    if (!options.cors_origin.empty()) {
      const std::string origin = options.cors_origin;
      server.set_pre_routing_handler([origin](const httplib::Request& req, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Vary", "Origin");
        if (req.method == "OPTIONS") {
          res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
          res.set_header("Access-Control-Allow-Headers",
                         "Authorization, Content-Type, Last-Event-ID");
          res.status = 204;
          return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
      });
    }
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        const std::string reason = httplib::status_message(res.status);
        send_error(res, res.status, reason, reason);
      }
    });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });

    server.Get("/whoami", guarded(Endpoint::kWhoAmI, [this](const Principal& p, const httplib::Request&,
                                                             httplib::Response& res) {
      json j = {{"role", to_string(p.role)}, {"label", p.label}, {"cohort", tokens.cohort()}};
      if (p.role == PrincipalRole::kStudent) j["session_id"] = p.session_id;
      send_json(res, 200, j);
    }));

    server.Post("/sessions", guarded(Endpoint::kCreateSession, [this](const Principal&,
                                                                     const httplib::Request& req, httplib::Response& res) {
      json body = to_json(options.defaults);
      if (!trim(req.body).empty()) {
        const auto patch = json::parse(req.body, nullptr, false);
        if (patch.is_discarded() || !patch.is_object()) {
          throw Error(ErrorCode::kInvalidConfig, "request body must be a JSON object");
        }
        body.update(patch);
      }
      const exam::ExamConfig config = config_from_json(body);
      const std::string id = service.create_session(config);
      const std::string student_token = tokens.mint_student(id);
      send_json(res, 201,
                {{"session_id", id}, {"student_token", student_token}, {"config", to_json(config)}});
    }));

    server.Get("/sessions", guarded(Endpoint::kListSessions, [this](const Principal&,
                                                                   const httplib::Request& req, httplib::Response& res) {
      std::size_t offset = 0;
      std::size_t limit = 100;
      if (req.has_param("offset")) {
        auto v = parse_size(req.get_param_value("offset"));
        if (!v) throw Error(ErrorCode::kParseError, "offset must be a non-negative integer");
        offset = *v;
      }
      if (req.has_param("limit")) {
        auto v = parse_size(req.get_param_value("limit"));
        if (!v || *v == 0 || *v > 1000) {
          throw Error(ErrorCode::kParseError, "limit must be an integer in 1..1000");
        }
        limit = *v;
      }
      const auto all = service.list();
      json sessions = json::array();
      for (std::size_t i = offset; i < all.size() && i < offset + limit; ++i) {
        sessions.push_back(summary_json(all[i], false));
      }
      send_json(res, 200,
                {{"cohort", tokens.cohort()},
                 {"total", all.size()},
                 {"offset", offset},
                 {"limit", limit},
                 {"sessions", sessions}});
    }));

    server.Get(path(""), guarded(Endpoint::kSessionStatus, [this](const Principal& p,
                                                                 const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200,
                summary_json(service.summary(req.matches[1].str()),
                             p.role == PrincipalRole::kStudent));
    }));

    server.Post(path("/submission"), guarded(Endpoint::kSubmitWork, [this](const Principal&,
                                                                          const httplib::Request& req,
                                                                          httplib::Response& res) {
      const std::string id = req.matches[1].str();
      const auto r = service.submit(id, req.body, req.get_header_value("Content-Type"));
      send_json(res, 200,
                {{"session_id", id},
                 {"state", "AwaitingAnswer"},
                 {"question", r.question},
                 {"question_number", r.question_number},
                 {"questions_remaining", r.questions_remaining},
                 {"word_count", r.word_count}});
    }));

    server.Post(path("/answers"), guarded(Endpoint::kSubmitAnswer, [this](const Principal&,
                                                                         const httplib::Request& req,
                                                                         httplib::Response& res) {
      const std::string id = req.matches[1].str();
      std::string text = req.body;
      if (is_json_body(req)) {
        const auto j = json::parse(req.body, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("answer") ||
            !j["answer"].is_string()) {
          throw Error(ErrorCode::kParseError, "expected {\"answer\": \"...\"}");
        }
        text = j["answer"].get<std::string>();
      }
      const auto r = service.answer(id, text);
      if (r.concluded) {
        send_json(res, 200, {{"session_id", id}, {"status", "concluded"}});
      } else {
        send_json(res, 200,
                  {{"session_id", id},
                   {"status", "question"},
                   {"question", r.question},
                   {"question_number", r.question_number},
                   {"questions_remaining", r.questions_remaining}});
      }
    }));

    server.Post(path("/abort"), guarded(Endpoint::kAbort, [this](const Principal& p,
                                                                const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1].str();
      std::string reason = req.body;
      if (is_json_body(req)) {
        const auto j = json::parse(req.body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
          throw Error(ErrorCode::kParseError, "expected {\"reason\": \"...\"}");
        }
        reason = j.value("reason", std::string());
      }
      if (!p.label.empty() && !trim(reason).empty()) {
        reason = std::string(trim(reason)) + " (" + p.label + ")";
      }
      service.abort(id, reason);
      send_json(res, 200, {{"session_id", id}, {"state", "Aborted"}});
    }));

    server.Get(path("/assessment"), guarded(Endpoint::kAssessment, [this](const Principal&,
                                                                         const httplib::Request& req,
                                                                         httplib::Response& res) {
      const std::string id = req.matches[1].str();
      const AssessmentReport r = service.assessment(id);
      json flags = json::array();
      for (const auto& f : r.flags) flags.push_back(to_json(f));
      json j = {{"session_id", r.session_id},
                {"state", exam::to_string(r.state)},
                {"questions_asked", r.questions_asked},
                {"assessment", r.verdict ? json(r.verdict->assessment) : json(nullptr)},
                {"confidence_score", r.verdict ? json(r.verdict->confidence_score) : json(nullptr)},
                {"abort_reason", r.abort_reason ? json(*r.abort_reason) : json(nullptr)},
                {"flags", flags},
                {"chain", chain_json(r.chain)}};
      if (r.has_transcript) {
        j["links"] = {{"transcript_json", "/sessions/" + id + "/transcript?format=json"},
                      {"transcript_text", "/sessions/" + id + "/transcript?format=text"}};
      }
      send_json(res, 200, j);
    }));

    server.Get(path("/transcript"), guarded(Endpoint::kTranscript, [this](const Principal&,
                                                                         const httplib::Request& req,
                                                                         httplib::Response& res) {
      const std::string id = req.matches[1].str();
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
      if (!service.contains(id)) throw Error(ErrorCode::kUnknownSession, "unknown session: " + id);
      if (!service.store().contains(id)) {
        throw Error(ErrorCode::kNotConcluded, "no transcript yet: no submission has been accepted");
      }
      const std::string doc = service.store().export_document(id, format);
      res.status = 200;
      res.set_content(doc, format == "text" ? "text/plain; charset=utf-8" : "application/json");
    }));

    server.Get(path("/events"), guarded(Endpoint::kEvents, [this](const Principal&,
                                                                 const httplib::Request& req, httplib::Response& res) {
      stream(req, res);
    }));
  }

  void stream(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1].str();
    if (!service.contains(id)) throw Error(ErrorCode::kUnknownSession, "unknown session: " + id);

    std::uint64_t from = 0;
    std::string last = req.get_header_value("Last-Event-ID");
    if (last.empty() && req.has_param("last_event_id")) last = req.get_param_value("last_event_id");
    if (!last.empty()) {
      auto v = parse_size(std::string(trim(last)));
      if (!v) throw Error(ErrorCode::kParseError, "Last-Event-ID must be a sequence number");
      from = *v + 1;
    }

    struct StreamState {
      std::optional<audit::Subscription> subscription;
      std::chrono::steady_clock::time_point last_write = std::chrono::steady_clock::now();
    };
    auto state = std::make_shared<StreamState>();

    res.set_header("Cache-Control", "no-cache");
    res.set_header("X-Accel-Buffering", "no");
    res.set_chunked_content_provider(
        "text/event-stream", [this, id, from, state](std::size_t, httplib::DataSink& sink) {
          const auto write = [&](const std::string& chunk) {
            state->last_write = std::chrono::steady_clock::now();
            return sink.write(chunk.data(), chunk.size());
          };
          const auto keepalive = [&] {
            if (std::chrono::steady_clock::now() - state->last_write < options.keepalive) {
              return true;
            }
            return write(": keepalive\n\n");
          };
          const auto sealed = [&] {
            const auto s = service.summary(id);
            const bool ok = write(sse_event(
                "sealed", std::nullopt,
                json({{"session_id", id}, {"state", exam::to_string(s.state)}}).dump()));
            sink.done();
            return ok;
          };
          if (stopping) {
            sink.done();
            return true;
          }
          if (!state->subscription) {
            if (!service.wait_for_transcript(id, options.stream_poll)) {
              if (exam::is_terminal(service.summary(id).state)) return sealed();
              return keepalive();
            }
            state->subscription = service.store().subscribe(id, from);
          }
          const auto next = state->subscription->next(options.stream_poll);
          switch (next.status) {
            case audit::Subscription::Status::kEntry: {
              const auto& e = *next.entry;
              const bool flag = e.role == audit::Role::kNote &&
                                e.content.rfind(audit::markers::kIntegrityFlag, 0) == 0;
              return write(sse_event(flag ? "flag" : "entry", e.seq, to_json(e).dump()));
            }
            case audit::Subscription::Status::kEnd:
              return sealed();
            case audit::Subscription::Status::kTimeout:
              return keepalive();
          }
          return false;
        });
  }
};

HttpServer::HttpServer(ExamService& service, TokenRegistry& tokens, HttpServerOptions options)
    : impl_(std::make_unique<Impl>(service, tokens, std::move(options))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    throw Error(ErrorCode::kInvalidConfig,
                "cannot listen on " + host + ":" + std::to_string(port));
  }
  impl_->stopping = false;
  impl_->service.start_reaper(impl_->options.reaper_interval);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::run(const std::string& host, int port) {
  impl_->stopping = false;
  impl_->service.start_reaper(impl_->options.reaper_interval);
  if (!impl_->server.listen(host, port)) {
    impl_->service.stop_reaper();
    if (!impl_->stopping) {
      throw Error(ErrorCode::kInvalidConfig,
                  "cannot listen on " + host + ":" + std::to_string(port));
    }
  }
  impl_->service.stop_reaper();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->stopping = true;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->service.stop_reaper();
}

}  // namespace viva::service
