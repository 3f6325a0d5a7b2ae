#pragma once

#include <memory>
#include <string>

#include "viva/engine/prompt.h"

namespace viva::engine {

/// A completion backend. Implementations throw Error{kProviderUnavailable}
/// on transport failure.
class ProviderPort {
 public:
  virtual ~ProviderPort() = default;

  virtual std::string complete(const PromptBundle& bundle) = 0;
  virtual std::string provider_id() const = 0;
  virtual std::string model() const = 0;
};

/// Deterministic examiner double.
///
/// Question k (0-based, counted from examiner turns already in the
/// conversation) quotes the k-th significant sentence of the submission
/// (>= 12 words, document order, wrapping). Once the candidate has answered
/// the maximum number of questions stated in the system prompt it returns a
/// verdict with confidence_score = min(100, 40 + 10 * answers of >= 30 words).
class MockProvider final : public ProviderPort {
 public:
  std::string complete(const PromptBundle& bundle) override;
  std::string provider_id() const override { return "mock"; }
  std::string model() const override { return "mock-examiner-1"; }
};

inline constexpr std::size_t kSignificantSentenceWords = 12;
inline constexpr std::size_t kDevelopedAnswerWords = 30;

/// Sentences of at least kSignificantSentenceWords words, in document order.
std::vector<std::string> significant_sentences(std::string_view text);

/// min(100, 40 + 10 * developed_answers)
int mock_confidence_score(int developed_answers);

/// Settings for an OpenAI-compatible chat-completions endpoint.
struct LiveProviderSettings {
  std::string endpoint;  // base URL, e.g. https://api.example.com
  std::string path = "/v1/chat/completions";
  std::string api_key;
  std::string model;
  double temperature = 0.2;
  int timeout_seconds = 120;
};

/// Overrides fields from VIVA_PROVIDER_ENDPOINT, VIVA_PROVIDER_PATH,
/// VIVA_PROVIDER_API_KEY, VIVA_PROVIDER_MODEL, VIVA_PROVIDER_TEMPERATURE when set.
LiveProviderSettings settings_from_environment(LiveProviderSettings base = {});

class LiveProvider final : public ProviderPort {
 public:
  explicit LiveProvider(LiveProviderSettings settings);

  std::string complete(const PromptBundle& bundle) override;
  std::string provider_id() const override { return "live"; }
  std::string model() const override { return settings_.model; }

  /// The request body sent for `bundle` (without credentials).
  std::string request_body(const PromptBundle& bundle) const;

 private:
  LiveProviderSettings settings_;
};

}  // namespace viva::engine
