#include "viva/service/auth.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "viva/common.h"

namespace viva::service {
namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view to_string(PrincipalRole role) {
  switch (role) {
    case PrincipalRole::kStudent: return "student";
    case PrincipalRole::kInvigilator: return "invigilator";
    case PrincipalRole::kAssessor: return "assessor";
  }
  return "student";
}

PrincipalRole parse_principal_role(std::string_view text) {
  const std::string t = lower(text);
  if (t == "student") return PrincipalRole::kStudent;
  if (t == "invigilator") return PrincipalRole::kInvigilator;
  if (t == "assessor") return PrincipalRole::kAssessor;
  throw Error(ErrorCode::kInvalidConfig, "unknown role: " + std::string(text));
}

TokenRegistry::TokenRegistry(TokenRegistry&& other) noexcept {
  std::lock_guard lock(other.mutex_);
  cohort_ = std::move(other.cohort_);
  by_digest_ = std::move(other.by_digest_);
}

TokenRegistry& TokenRegistry::operator=(TokenRegistry&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mutex_, other.mutex_);
    cohort_ = std::move(other.cohort_);
    by_digest_ = std::move(other.by_digest_);
  }
  return *this;
}

TokenRegistry TokenRegistry::from_json(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("tokens") || !j["tokens"].is_array()) {
    throw Error(ErrorCode::kInvalidConfig, "tokens file must be an object with a \"tokens\" array");
  }
  TokenRegistry registry;
  try {
    registry.cohort_ = j.value("cohort", std::string());
    for (const auto& item : j["tokens"]) {
      Principal p;
      p.role = parse_principal_role(item.at("role").get<std::string>());
      if (p.role == PrincipalRole::kStudent) {
        throw Error(ErrorCode::kInvalidConfig,
                    "student tokens are minted per session and cannot be provisioned");
      }
      p.label = item.value("label", std::string());
      registry.add(item.at("token").get<std::string>(), std::move(p));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kInvalidConfig, std::string("invalid tokens file: ") + ex.what());
  }
  return registry;
}

TokenRegistry TokenRegistry::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kInvalidConfig, "cannot read tokens file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

void TokenRegistry::add(const std::string& token, Principal principal) {
  if (token.size() < 16) {
    throw Error(ErrorCode::kInvalidConfig, "tokens must be at least 16 characters");
  }
  std::lock_guard lock(mutex_);
  if (!by_digest_.emplace(sha256_hex(token), std::move(principal)).second) {
    throw Error(ErrorCode::kInvalidConfig, "duplicate token");
  }
}

std::string TokenRegistry::mint_student(const std::string& session_id) {
  std::string token = "stu_" + random_hex(24);
  add(token, Principal{PrincipalRole::kStudent, "student", session_id});
  return token;
}

std::optional<Principal> TokenRegistry::find(std::string_view token) const {
  if (token.empty()) return std::nullopt;
  const std::string digest = sha256_hex(token);
  std::lock_guard lock(mutex_);
  auto it = by_digest_.find(digest);
  if (it == by_digest_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> bearer_token(std::string_view header_value) {
  const std::string_view v = trim(header_value);
  if (v.size() < 7 || lower(v.substr(0, 7)) != "bearer ") return std::nullopt;
  const std::string_view token = trim(v.substr(7));
  if (token.empty()) return std::nullopt;
  return std::string(token);
}

}  // namespace viva::service
