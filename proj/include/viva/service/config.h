#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "viva/engine/provider.h"
#include "viva/exam/session.h"
#include "viva/guard/submission_guard.h"

namespace viva::service {

/// Settings shared by the service and the command-line tool.
///
/// {
///   "listen": {"host": "127.0.0.1", "port": 8080},
///   "threads": 128,
///   "store_path": "var/transcripts", "store_sync": true,
///   "tokens_path": "cohort-tokens.json",
///   "rules_path": "",
///   "max_submission_bytes": 2097152,
///   "provider": {"endpoint", "path", "model", "temperature", "timeout_seconds"},
///   "defaults": {ExamConfig fields},
///   "cors_origin": ""
/// }
///
/// Secrets come from the environment: VIVA_PROVIDER_API_KEY (plus the other
/// VIVA_PROVIDER_* settings) and VIVA_TOKENS_PATH.
struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int threads = 128;
  std::string store_path;  // empty: in-memory store
  bool store_sync = true;
  std::string tokens_path;
  std::string rules_path;  // empty: built-in rules
  std::size_t max_submission_bytes = guard::kDefaultSizeCap;
  engine::LiveProviderSettings provider;
  exam::ExamConfig defaults;
  std::string cors_origin;
};

/// Throws Error{kInvalidConfig}.
ServiceConfig parse_service_config(std::string_view json_text);
ServiceConfig load_service_config(const std::string& path);

/// Applies environment overrides (see above).
ServiceConfig with_environment(ServiceConfig config);

}  // namespace viva::service
