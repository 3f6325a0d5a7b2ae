#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "viva/common.h"
#include "viva/service/auth.h"
#include "viva/service/exam_service.h"

namespace viva::service {

enum class Endpoint {
  kWhoAmI,             // GET  /whoami
  kCreateSession,      // POST /sessions
  kListSessions,       // GET  /sessions
  kSessionStatus,      // GET  /sessions/{id}
  kSubmitWork,         // POST /sessions/{id}/submission
  kSubmitAnswer,       // POST /sessions/{id}/answers
  kEvents,             // GET  /sessions/{id}/events
  kAssessment,         // GET  /sessions/{id}/assessment
  kAbort,              // POST /sessions/{id}/abort
  kTranscript,         // GET  /sessions/{id}/transcript
};

std::string_view to_string(Endpoint endpoint);

/// The allow table. Students are further limited to their own session.
bool role_allowed(PrincipalRole role, Endpoint endpoint);

/// HTTP status for a domain error.
int http_status(ErrorCode code);

struct HttpServerOptions {
  exam::ExamConfig defaults;  // POST /sessions bodies are applied on top
  int threads = 128;
  std::size_t max_body_bytes = guard::kDefaultSizeCap + 64 * 1024;
  std::string cors_origin;
  std::chrono::milliseconds stream_poll{250};
  std::chrono::milliseconds keepalive{15000};
  std::chrono::milliseconds reaper_interval{1000};
};

class HttpServer {
 public:
  HttpServer(ExamService& service, TokenRegistry& tokens, HttpServerOptions options = {});
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port. Throws Error{kInvalidConfig} if binding fails.
  int start(const std::string& host, int port);

  /// Binds and serves on the calling thread until stop() is called.
  void run(const std::string& host, int port);

  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace viva::service
