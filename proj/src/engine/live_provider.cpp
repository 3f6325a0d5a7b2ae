#include <cstdlib>

#include "httplib.h"
#include "json.hpp"
#include "viva/engine/provider.h"

namespace viva::engine {
namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* value = std::getenv(name);
  return value && *value ? std::string(value) : fallback;
}

std::string_view wire_role(Speaker speaker) {
  return speaker == Speaker::kExaminer ? "assistant" : "user";
}

}  // namespace

LiveProviderSettings settings_from_environment(LiveProviderSettings base) {
  base.endpoint = env_or("VIVA_PROVIDER_ENDPOINT", base.endpoint);
  base.path = env_or("VIVA_PROVIDER_PATH", base.path);
  base.api_key = env_or("VIVA_PROVIDER_API_KEY", base.api_key);
  base.model = env_or("VIVA_PROVIDER_MODEL", base.model);
  if (const char* t = std::getenv("VIVA_PROVIDER_TEMPERATURE"); t && *t) {
    base.temperature = std::atof(t);
  }
  return base;
}

LiveProvider::LiveProvider(LiveProviderSettings settings) : settings_(std::move(settings)) {
  if (settings_.endpoint.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "live provider endpoint is not configured");
  }
  if (settings_.model.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "live provider model is not configured");
  }
}

std::string LiveProvider::request_body(const PromptBundle& bundle) const {
  nlohmann::json messages = nlohmann::json::array();
  messages.push_back({{"role", "system"}, {"content", bundle.system_prompt}});
  for (const PromptMessage& msg : bundle.conversation) {
    messages.push_back({{"role", wire_role(msg.role)}, {"content", msg.content}});
  }
  nlohmann::json body;
  body["model"] = settings_.model;
  body["messages"] = std::move(messages);
  body["temperature"] = settings_.temperature;
  return body.dump();
}

std::string LiveProvider::complete(const PromptBundle& bundle) {
  httplib::Client client(settings_.endpoint);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(std::chrono::seconds(settings_.timeout_seconds));
  httplib::Headers headers;
  if (!settings_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + settings_.api_key);
  }
  auto res = client.Post(settings_.path, headers, request_body(bundle), "application/json");
  if (!res) {
    throw Error(ErrorCode::kProviderUnavailable,
                "provider request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kProviderUnavailable,
                "provider returned HTTP " + std::to_string(res->status));
  }
  try {
    const auto doc = nlohmann::json::parse(res->body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kProviderUnavailable,
                std::string("unexpected provider response: ") + ex.what());
  }
}

}  // namespace viva::engine
