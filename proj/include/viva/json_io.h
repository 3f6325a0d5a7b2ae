#pragma once

// JSON mappings for the wire and storage formats.

#include "json.hpp"
#include "viva/audit/transcript.h"
#include "viva/exam/session.h"
#include "viva/final_assessment.h"
#include "viva/guard/submission_guard.h"

namespace viva {

nlohmann::json to_json(const exam::ExamConfig& config);
/// Missing fields take defaults; wrong types throw Error{kInvalidConfig}.
/// Does not validate invariants.
exam::ExamConfig config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const guard::InjectionFlag& flag);
guard::InjectionFlag flag_from_json(const nlohmann::json& j);

nlohmann::json to_json(const guard::SanitizedSubmission& submission);

nlohmann::json to_json(const FinalAssessment& verdict);

nlohmann::json to_json(const audit::TranscriptEntry& entry);
audit::TranscriptEntry entry_from_json(const nlohmann::json& j);

nlohmann::json to_json(const audit::TranscriptHeader& header);
audit::TranscriptHeader header_from_json(const nlohmann::json& j);

nlohmann::json to_json(const audit::SubmissionRecord& record);
audit::SubmissionRecord submission_from_json(const nlohmann::json& j);

}  // namespace viva
