#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace viva::service {

enum class PrincipalRole { kStudent, kInvigilator, kAssessor };

std::string_view to_string(PrincipalRole role);
/// Accepts "student", "invigilator", "assessor" (any case).
PrincipalRole parse_principal_role(std::string_view text);

struct Principal {
  PrincipalRole role = PrincipalRole::kStudent;
  std::string label;
  std::string session_id;  // students only

  bool may_act_on(std::string_view id) const {
    return role != PrincipalRole::kStudent || session_id == id;
  }
};

/// Bearer-token lookup. Tokens are kept only as SHA-256 digests.
class TokenRegistry {
 public:
  /// Cohort file: {"cohort": "...", "tokens": [{"token", "role", "label"?}]}.
  /// Only invigilator and assessor tokens may be provisioned this way.
  /// Throws Error{kInvalidConfig}.
  static TokenRegistry from_json(std::string_view json_text);
  static TokenRegistry load(const std::string& path);

  TokenRegistry() = default;
  TokenRegistry(TokenRegistry&& other) noexcept;
  TokenRegistry& operator=(TokenRegistry&& other) noexcept;

  /// Throws Error{kInvalidConfig} on an empty or duplicate token.
  void add(const std::string& token, Principal principal);

  /// Mints a fresh student token scoped to one session.
  std::string mint_student(const std::string& session_id);

  std::optional<Principal> find(std::string_view token) const;

  const std::string& cohort() const { return cohort_; }

 private:
  mutable std::mutex mutex_;
  std::string cohort_;
  std::unordered_map<std::string, Principal> by_digest_;
};

/// Extracts the token from an "Authorization: Bearer <token>" value.
std::optional<std::string> bearer_token(std::string_view header_value);

}  // namespace viva::service
