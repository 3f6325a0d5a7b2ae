#include "viva/service/config.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "viva/json_io.h"

namespace viva::service {

ServiceConfig parse_service_config(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kInvalidConfig, "service config must be a JSON object");
  }
  ServiceConfig c;
  try {
    if (j.contains("listen")) {
      const auto& l = j.at("listen");
      c.host = l.value("host", c.host);
      c.port = l.value("port", c.port);
    }
    c.threads = j.value("threads", c.threads);
    c.store_path = j.value("store_path", c.store_path);
    c.store_sync = j.value("store_sync", c.store_sync);
    c.tokens_path = j.value("tokens_path", c.tokens_path);
    c.rules_path = j.value("rules_path", c.rules_path);
    c.max_submission_bytes = j.value("max_submission_bytes", c.max_submission_bytes);
    c.cors_origin = j.value("cors_origin", c.cors_origin);
    if (j.contains("provider")) {
      const auto& p = j.at("provider");
      c.provider.endpoint = p.value("endpoint", c.provider.endpoint);
      c.provider.path = p.value("path", c.provider.path);
      c.provider.model = p.value("model", c.provider.model);
      c.provider.temperature = p.value("temperature", c.provider.temperature);
      c.provider.timeout_seconds = p.value("timeout_seconds", c.provider.timeout_seconds);
      if (p.contains("api_key")) {
        throw Error(ErrorCode::kInvalidConfig,
                    "provider.api_key must not be stored in the config file; set "
                    "VIVA_PROVIDER_API_KEY instead");
      }
    }
    if (j.contains("defaults")) c.defaults = config_from_json(j.at("defaults"));
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kInvalidConfig, std::string("invalid service config: ") + ex.what());
  }
  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::kInvalidConfig, "port out of range");
  if (c.threads < 1) throw Error(ErrorCode::kInvalidConfig, "threads must be at least 1");
  exam::validate(c.defaults);
  return c;
}

ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kInvalidConfig, "cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_service_config(buf.str());
}

ServiceConfig with_environment(ServiceConfig config) {
  config.provider = engine::settings_from_environment(config.provider);
  if (const char* v = std::getenv("VIVA_TOKENS_PATH"); v && *v) config.tokens_path = v;
  return config;
}

}  // namespace viva::service
