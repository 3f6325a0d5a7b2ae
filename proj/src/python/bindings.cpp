#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "json.hpp"
#include "viva/audit/store.h"
#include "viva/engine/classifier.h"
#include "viva/engine/provider.h"
#include "viva/guard/submission_guard.h"
#include "viva/json_io.h"
#include "viva/service/exam_service.h"

namespace py = pybind11;

namespace {

py::object to_py(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null: return py::none();
    case nlohmann::json::value_t::boolean: return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
    case nlohmann::json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
    case nlohmann::json::value_t::number_float: return py::float_(j.get<double>());
    case nlohmann::json::value_t::string: return py::str(j.get_ref<const std::string&>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(to_py(item));
      return std::move(out);
    }
    case nlohmann::json::value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items()) out[py::str(key)] = to_py(value);
      return std::move(out);
    }
    default: return py::none();
  }
}

py::dict report_dict(const viva::audit::VerificationReport& r) {
  py::dict d;
  d["valid"] = r.valid;
  d["entries_checked"] = r.entries_checked;
  d["broken_seq"] = r.broken_seq ? py::object(py::int_(*r.broken_seq)) : py::none();
  d["expected"] = r.expected;
  d["found"] = r.found;
  d["detail"] = r.detail;
  return d;
}

py::list flags_list(const std::vector<viva::guard::InjectionFlag>& flags) {
  py::list out;
  for (const auto& f : flags) out.append(to_py(viva::to_json(f)));
  return out;
}

std::string as_bytes(const py::object& data) {
  if (py::isinstance<py::bytes>(data)) return data.cast<std::string>();
  if (py::isinstance<py::str>(data)) return data.cast<std::string>();
  throw py::type_error("expected str or bytes");
}

// In-process examination service with an in-memory store.
class Examinations {
 public:
  Examinations(const std::string& fixed_clock, const std::string& session_id) {
    viva::service::ServiceOptions options;
    if (!fixed_clock.empty()) {
      options.clock = viva::stepping_clock(viva::parse_timestamp(fixed_clock), std::chrono::seconds(1));
    }
    if (!session_id.empty()) options.id_generator = viva::service::fixed_id_generator(session_id);
    service_ = std::make_unique<viva::service::ExamService>(store_, options);
  }

  std::string create_session(int min_questions, int max_questions, const std::string& context,
                             int answer_timeout, int retries) {
    viva::exam::ExamConfig c;
    c.min_questions = min_questions;
    c.max_questions = max_questions;
    c.academic_context = context;
    c.answer_timeout = std::chrono::seconds(answer_timeout);
    c.max_provider_retries = retries;
    return service_->create_session(c);
  }

  py::dict submit(const std::string& id, const py::object& data, const std::string& format) {
    viva::service::SubmissionResult r;
    {
      const std::string bytes = as_bytes(data);
      py::gil_scoped_release release;
      r = service_->submit(id, bytes, format);
    }
    py::dict d;
    d["question"] = r.question;
    d["question_number"] = r.question_number;
    d["questions_remaining"] = r.questions_remaining;
    d["word_count"] = r.word_count;
    return d;
  }

  py::dict answer(const std::string& id, const std::string& text) {
    viva::service::AnswerResult r;
    {
      py::gil_scoped_release release;
      r = service_->answer(id, text);
    }
    py::dict d;
    d["concluded"] = r.concluded;
    d["question"] = r.concluded ? py::object(py::none()) : py::object(py::str(r.question));
    d["question_number"] = r.question_number;
    d["questions_remaining"] = r.questions_remaining;
    return d;
  }

  void abort(const std::string& id, const std::string& reason) { service_->abort(id, reason); }

  py::dict assessment(const std::string& id) {
    const auto r = service_->assessment(id);
    py::dict d;
    d["session_id"] = r.session_id;
    d["state"] = std::string(viva::exam::to_string(r.state));
    d["questions_asked"] = r.questions_asked;
    d["assessment"] = r.verdict ? py::object(py::str(r.verdict->assessment)) : py::none();
    d["confidence_score"] =
        r.verdict ? py::object(py::int_(r.verdict->confidence_score)) : py::none();
    d["abort_reason"] = r.abort_reason ? py::object(py::str(*r.abort_reason)) : py::none();
    d["flags"] = flags_list(r.flags);
    d["chain"] = report_dict(r.chain);
    return d;
  }

  py::list sessions() {
    py::list out;
    for (const auto& s : service_->list()) {
      py::dict d;
      d["session_id"] = s.session_id;
      d["state"] = std::string(viva::exam::to_string(s.state));
      d["questions_asked"] = s.questions_asked;
      d["flag_count"] = s.flag_count;
      out.append(d);
    }
    return out;
  }

  std::string export_document(const std::string& id, const std::string& format) {
    return store_.export_document(id, format);
  }

  py::dict verify_chain(const std::string& id) { return report_dict(store_.verify_chain(id)); }

 private:
  viva::audit::TranscriptStore store_;
  std::unique_ptr<viva::service::ExamService> service_;
};

}  // namespace

PYBIND11_MODULE(_viva, m) {
  m.doc() = "Virtual viva voce examination core";

  static py::exception<viva::Error> error(m, "VivaError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const viva::Error& e) {
      py::object args = py::make_tuple(std::string(viva::to_string(e.code())), e.what());
      PyErr_SetObject(error.ptr(), args.ptr());
    }
  });

  m.def(
      "sanitize",
      [](const py::object& data, const std::string& format) {
        const auto raw = viva::guard::ingest(as_bytes(data), format, viva::Timestamp{});
        return to_py(viva::to_json(viva::guard::sanitize(raw)));
      },
      py::arg("data"), py::arg("declared_format") = "text/plain",
      "Ingest, normalize and scan a submission.");

  m.def(
      "scan", [](const std::string& text) { return flags_list(viva::guard::scan_injection(text)); },
      py::arg("text"), "Injection flags for already-normalized text.");

  m.def("rules_version", [] { return viva::guard::RuleSet::builtin().version(); });

  m.def(
      "classify_output",
      [](const std::string& raw) {
        const auto out = viva::engine::classify_output(raw);
        py::dict d;
        if (const auto* q = std::get_if<viva::engine::Question>(&out)) {
          d["kind"] = "question";
          d["text"] = q->text;
        } else if (const auto* v = std::get_if<viva::engine::Verdict>(&out)) {
          d["kind"] = "verdict";
          d["assessment"] = v->assessment.assessment;
          d["confidence_score"] = v->assessment.confidence_score;
          d["fenced"] = v->fenced;
        } else {
          const auto& bad = std::get<viva::engine::Malformed>(out);
          d["kind"] = "malformed";
          d["raw"] = bad.raw;
          d["error"] = bad.error;
        }
        return d;
      },
      py::arg("raw"), "Classify examiner output as question, verdict or malformed.");

  m.def("mock_confidence_score", &viva::engine::mock_confidence_score,
        py::arg("developed_answers"));

  m.def(
      "verify_export",
      [](const std::string& document) { return report_dict(viva::audit::verify_export(document)); },
      py::arg("document"), "Audit an exported JSON transcript.");

  m.def(
      "export_text",
      [](const std::string& document) {
        const auto t = viva::audit::parse_export(document);
        return viva::audit::export_text(t.header, t.submission, t.entries, t.sealed);
      },
      py::arg("document"), "Render an exported JSON transcript as plain text.");

  py::class_<Examinations>(m, "Examinations")
      .def(py::init<const std::string&, const std::string&>(), py::arg("fixed_clock") = "",
           py::arg("session_id") = "")
      .def("create_session", &Examinations::create_session, py::arg("min_questions") = 4,
           py::arg("max_questions") = 5, py::arg("academic_context") = "",
           py::arg("answer_timeout") = 600, py::arg("max_provider_retries") = 2)
      .def("submit", &Examinations::submit, py::arg("session_id"), py::arg("data"),
           py::arg("declared_format") = "text/plain")
      .def("answer", &Examinations::answer, py::arg("session_id"), py::arg("text"))
      .def("abort", &Examinations::abort, py::arg("session_id"), py::arg("reason") = "")
      .def("assessment", &Examinations::assessment, py::arg("session_id"))
      .def("sessions", &Examinations::sessions)
      .def("export", &Examinations::export_document, py::arg("session_id"),
           py::arg("format") = "json")
      .def("verify_chain", &Examinations::verify_chain, py::arg("session_id"));
}
