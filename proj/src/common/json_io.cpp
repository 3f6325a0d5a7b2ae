#include "viva/json_io.h"

namespace viva {
namespace {

template <class T, class F>
T guarded(ErrorCode code, std::string_view what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(code, std::string(what) + ": " + ex.what());
  }
}

}  // namespace

nlohmann::json to_json(const exam::ExamConfig& config) {
  return {{"min_questions", config.min_questions},
          {"max_questions", config.max_questions},
          {"academic_context", config.academic_context},
          {"answer_timeout_seconds", config.answer_timeout.count()},
          {"provider_id", config.provider_id},
          {"max_provider_retries", config.max_provider_retries}};
}

exam::ExamConfig config_from_json(const nlohmann::json& j) {
  return guarded<exam::ExamConfig>(ErrorCode::kInvalidConfig, "invalid exam config", [&] {
    if (!j.is_object()) {
      throw Error(ErrorCode::kInvalidConfig, "exam config must be a JSON object");
    }
    exam::ExamConfig c;
    c.min_questions = j.value("min_questions", c.min_questions);
    c.max_questions = j.value("max_questions", c.max_questions);
    c.academic_context = j.value("academic_context", c.academic_context);
    c.answer_timeout = std::chrono::seconds(
        j.value("answer_timeout_seconds", static_cast<std::int64_t>(c.answer_timeout.count())));
    c.provider_id = j.value("provider_id", c.provider_id);
    c.max_provider_retries = j.value("max_provider_retries", c.max_provider_retries);
    return c;
  });
}

nlohmann::json to_json(const guard::InjectionFlag& flag) {
  return {{"rule_id", flag.rule_id},
          {"severity", guard::to_string(flag.severity)},
          {"span", {{"begin", flag.span.begin}, {"end", flag.span.end}}},
          {"excerpt", flag.excerpt},
          {"description", flag.description}};
}

guard::InjectionFlag flag_from_json(const nlohmann::json& j) {
  guard::InjectionFlag f;
  f.rule_id = j.at("rule_id").get<std::string>();
  f.severity = guard::parse_severity(j.at("severity").get<std::string>());
  f.span.begin = j.at("span").at("begin").get<std::size_t>();
  f.span.end = j.at("span").at("end").get<std::size_t>();
  f.excerpt = j.at("excerpt").get<std::string>();
  f.description = j.at("description").get<std::string>();
  return f;
}

nlohmann::json to_json(const guard::SanitizedSubmission& submission) {
  nlohmann::json flags = nlohmann::json::array();
  for (const auto& f : submission.flags) flags.push_back(to_json(f));
  return {{"text", submission.text},
          {"flags", std::move(flags)},
          {"original_digest", submission.original_digest},
          {"word_count", submission.word_count}};
}

nlohmann::json to_json(const FinalAssessment& verdict) {
  return {{"assessment", verdict.assessment}, {"confidence_score", verdict.confidence_score}};
}

nlohmann::json to_json(const audit::TranscriptEntry& e) {
  return {{"session_id", e.session_id},
          {"seq", e.seq},
          {"timestamp", format_timestamp(e.timestamp)},
          {"role", audit::to_string(e.role)},
          {"content", e.content},
          {"prev_hash", e.prev_hash},
          {"entry_hash", e.entry_hash}};
}

audit::TranscriptEntry entry_from_json(const nlohmann::json& j) {
  return guarded<audit::TranscriptEntry>(ErrorCode::kParseError, "invalid transcript entry", [&] {
    if (!j.is_object() || j.size() != 7) {
      throw Error(ErrorCode::kParseError, "transcript entry must be an object with 7 fields");
    }
    audit::TranscriptEntry e;
    e.session_id = j.at("session_id").get<std::string>();
    e.seq = j.at("seq").get<std::uint64_t>();
    e.timestamp = parse_timestamp(j.at("timestamp").get<std::string>());
    e.role = audit::parse_role(j.at("role").get<std::string>());
    e.content = j.at("content").get<std::string>();
    e.prev_hash = j.at("prev_hash").get<std::string>();
    e.entry_hash = j.at("entry_hash").get<std::string>();
    return e;
  });
}

nlohmann::json to_json(const audit::TranscriptHeader& h) {
  return {{"session_id", h.session_id},
          {"created_at", format_timestamp(h.created_at)},
          {"config", to_json(h.config)},
          {"submission_digest", h.submission_digest},
          {"rules_version", h.rules_version},
          {"prompt_template_version", h.prompt_template_version},
          {"hash_algorithm", h.hash_algorithm},
          {"provider", {{"id", h.provider.id}, {"model", h.provider.model}}}};
}

audit::TranscriptHeader header_from_json(const nlohmann::json& j) {
  return guarded<audit::TranscriptHeader>(ErrorCode::kParseError, "invalid transcript header", [&] {
    audit::TranscriptHeader h;
    h.session_id = j.at("session_id").get<std::string>();
    h.created_at = parse_timestamp(j.at("created_at").get<std::string>());
    h.config = config_from_json(j.at("config"));
    h.submission_digest = j.at("submission_digest").get<std::string>();
    h.rules_version = j.at("rules_version").get<std::string>();
    h.prompt_template_version = j.at("prompt_template_version").get<std::string>();
    h.hash_algorithm = j.at("hash_algorithm").get<std::string>();
    h.provider.id = j.at("provider").at("id").get<std::string>();
    h.provider.model = j.at("provider").at("model").get<std::string>();
    return h;
  });
}

nlohmann::json to_json(const audit::SubmissionRecord& r) {
  nlohmann::json j = to_json(r.sanitized);
  j["raw"] = r.raw;
  j["declared_format"] = r.declared_format;
  j["received_at"] = format_timestamp(r.received_at);
  return j;
}

audit::SubmissionRecord submission_from_json(const nlohmann::json& j) {
  return guarded<audit::SubmissionRecord>(ErrorCode::kParseError, "invalid submission record", [&] {
    audit::SubmissionRecord r;
    r.raw = j.at("raw").get<std::string>();
    r.declared_format = j.at("declared_format").get<std::string>();
    r.received_at = parse_timestamp(j.at("received_at").get<std::string>());
    r.sanitized.text = j.at("text").get<std::string>();
    r.sanitized.original_digest = j.at("original_digest").get<std::string>();
    r.sanitized.word_count = j.at("word_count").get<std::size_t>();
    for (const auto& f : j.at("flags")) r.sanitized.flags.push_back(flag_from_json(f));
    return r;
  });
}

}  // namespace viva
