#include "viva/guard/submission_guard.h"

#include <unicode/bytestream.h>
#include <unicode/normalizer2.h>
#include <unicode/stringpiece.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/regex.hpp>

#include "json.hpp"

namespace viva::guard {
namespace {

#include "default_rules.inc"

constexpr std::string_view kInvisibleRule = "invisible-chars";
constexpr std::string_view kControlRule = "control-chars";

// Strict UTF-8 decode of one code point at `pos`. Returns the number of bytes
// consumed, or 0 on malformed input (overlong, surrogate, > U+10FFFF, truncated).
std::size_t decode_utf8(std::string_view s, std::size_t pos, char32_t& cp) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
  const unsigned char lead = byte(pos);
  if (lead < 0x80) {
    cp = lead;
    return 1;
  }
  std::size_t len = 0;
  char32_t min = 0;
  if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
    min = 0x80;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
    min = 0x800;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
    min = 0x10000;
  } else {
    return 0;
  }
  if (pos + len > s.size()) {
    return 0;
  }
  for (std::size_t i = 1; i < len; ++i) {
    const unsigned char c = byte(pos + i);
    if ((c & 0xC0) != 0x80) {
      return 0;
    }
    cp = (cp << 6) | (c & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    return 0;
  }
  return len;
}

bool is_stray_control(char32_t cp) {
  if (cp == '\n' || cp == '\t') {
    return false;
  }
  return cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp <= 0x9F);
}

std::string codepoint_label(char32_t cp) {
  std::array<char, 16> buf{};
  std::snprintf(buf.data(), buf.size(), "U+%04X", static_cast<unsigned>(cp));
  return buf.data();
}

// A removal site: one or more adjacent code points removed at a single
// position of the intermediate (pre-NFC) text.
struct RemovalSite {
  std::size_t pos = 0;
  bool invisible = false;
  std::vector<char32_t> codepoints;
};

const icu::Normalizer2& nfc_instance() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || nfc == nullptr) {
    throw Error(ErrorCode::kStorageFailure, "ICU NFC normalizer unavailable");
  }
  return *nfc;
}

std::string nfc(std::string_view s) {
  const icu::Normalizer2& norm = nfc_instance();
  std::string out;
  out.reserve(s.size());
  icu::StringByteSink<std::string> sink(&out);
  UErrorCode status = U_ZERO_ERROR;
  norm.normalizeUTF8(0, icu::StringPiece(s.data(), static_cast<int32_t>(s.size())), sink, nullptr,
                     status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::kInvalidEncoding, "NFC normalization failed");
  }
  return out;
}

// NFC-normalizes `s` and maps each (ascending) byte position in `s` to the
// corresponding position in the result. Positions followed by a character
// that composes with its predecessor map to the start of the composed char.
std::string nfc_with_positions(const std::string& s, std::vector<std::size_t>& positions) {
  const icu::Normalizer2& norm = nfc_instance();
  std::string out;
  out.reserve(s.size());
  std::size_t segment_start = 0;
  for (std::size_t& p : positions) {
    bool boundary = p >= s.size();
    if (!boundary) {
      char32_t cp = 0;
      decode_utf8(s, p, cp);
      boundary = norm.hasBoundaryBefore(static_cast<UChar32>(cp)) != 0;
    }
    if (boundary) {
      out += nfc(std::string_view(s).substr(segment_start, p - segment_start));
      segment_start = p;
      p = out.size();
    } else {
      p = out.size() + nfc(std::string_view(s).substr(segment_start, p - segment_start)).size();
    }
  }
  out += nfc(std::string_view(s).substr(segment_start));
  for (std::size_t& p : positions) {
    p = std::min(p, out.size());
    while (p > 0 && p < out.size() && (static_cast<unsigned char>(out[p]) & 0xC0) == 0x80) {
      --p;
    }
  }
  return out;
}

bool is_space_byte(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Widens a removal point to the whitespace-delimited token around it so the
// flag excerpt shows the affected word.
ByteSpan enclosing_token(std::string_view text, std::size_t pos) {
  std::size_t begin = pos;
  while (begin > 0 && !is_space_byte(text[begin - 1])) {
    --begin;
  }
  std::size_t end = pos;
  while (end < text.size() && !is_space_byte(text[end])) {
    ++end;
  }
  return {begin, end};
}

InjectionFlag removal_flag(const RemovalSite& site, std::string_view text, ByteSpan span) {
  InjectionFlag flag;
  flag.rule_id = std::string(site.invisible ? kInvisibleRule : kControlRule);
  flag.severity = site.invisible ? Severity::kHigh : Severity::kLow;
  flag.span = span;
  flag.excerpt = std::string(text.substr(span.begin, span.end - span.begin));
  std::ostringstream desc;
  desc << "Removed " << site.codepoints.size()
       << (site.invisible ? " invisible or bidirectional-control" : " control")
       << (site.codepoints.size() == 1 ? " code point" : " code points") << " (";
  const std::size_t shown = std::min<std::size_t>(site.codepoints.size(), 8);
  for (std::size_t i = 0; i < shown; ++i) {
    desc << (i ? ", " : "") << codepoint_label(site.codepoints[i]);
  }
  if (shown < site.codepoints.size()) {
    desc << ", ...";
  }
  desc << ")";
  flag.description = desc.str();
  return flag;
}

void sort_flags(std::vector<InjectionFlag>& flags) {
  std::sort(flags.begin(), flags.end(), [](const InjectionFlag& a, const InjectionFlag& b) {
    if (a.span.begin != b.span.begin) return a.span.begin < b.span.begin;
    if (a.span.end != b.span.end) return a.span.end < b.span.end;
    return a.rule_id < b.rule_id;
  });
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view to_string(Severity severity) {
  switch (severity) {
    case Severity::kLow: return "Low";
    case Severity::kMedium: return "Medium";
    case Severity::kHigh: return "High";
  }
  return "Low";
}

Severity parse_severity(std::string_view text) {
  const std::string lower = lowercase(text);
  if (lower == "low") return Severity::kLow;
  if (lower == "medium") return Severity::kMedium;
  if (lower == "high") return Severity::kHigh;
  throw Error(ErrorCode::kParseError, "unknown severity: " + std::string(text));
}

bool is_invisible_codepoint(char32_t cp) {
  return (cp >= 0x200B && cp <= 0x200F) || (cp >= 0x202A && cp <= 0x202E) ||
         (cp >= 0x2060 && cp <= 0x2064) || (cp >= 0x2066 && cp <= 0x2069) || cp == 0xFEFF;
}

bool is_valid_utf8(std::string_view bytes) {
  char32_t cp = 0;
  for (std::size_t pos = 0; pos < bytes.size();) {
    const std::size_t len = decode_utf8(bytes, pos, cp);
    if (len == 0) {
      return false;
    }
    pos += len;
  }
  return true;
}

RawSubmission ingest(std::string bytes, std::string_view declared_format, Timestamp received_at,
                     std::size_t size_cap) {
  // Accept "text/plain" with an optional utf-8 / us-ascii charset parameter.
  const std::string format = lowercase(trim(declared_format));
  const std::string_view media = trim(std::string_view(format).substr(0, format.find(';')));
  if (media != kPlainText) {
    throw Error(ErrorCode::kUnsupportedFormat,
                "only text/plain submissions are accepted, got '" + std::string(declared_format) + "'");
  }
  if (const auto semi = format.find(';'); semi != std::string::npos) {
    std::string params = format.substr(semi + 1);
    params.erase(std::remove_if(params.begin(), params.end(),
                                [](unsigned char c) { return std::isspace(c) || c == '"'; }),
                 params.end());
    if (params.rfind("charset=", 0) == 0 && params != "charset=utf-8" &&
        params != "charset=utf8" && params != "charset=us-ascii") {
      throw Error(ErrorCode::kUnsupportedFormat, "unsupported charset: " + params.substr(8));
    }
  }
  if (bytes.empty()) {
    throw Error(ErrorCode::kEmptySubmission, "submission is empty");
  }
  if (bytes.size() > size_cap) {
    throw Error(ErrorCode::kOversizeSubmission,
                "submission is " + std::to_string(bytes.size()) + " bytes; the limit is " +
                    std::to_string(size_cap));
  }
  if (!is_valid_utf8(bytes)) {
    throw Error(ErrorCode::kInvalidEncoding, "submission is not valid UTF-8");
  }
  return RawSubmission{std::move(bytes), std::string(declared_format), received_at};
}

NormalizedText normalize(const RawSubmission& raw) {
  const std::string_view in = raw.bytes;
  std::string stage;
  stage.reserve(in.size());
  std::vector<RemovalSite> sites;

  std::size_t pos = 0;
  // A leading byte-order mark is an encoding signature, not hidden content.
  if (in.substr(0, 3) == "\xEF\xBB\xBF") {
    pos = 3;
  }
  while (pos < in.size()) {
    char32_t cp = 0;
    const std::size_t len = decode_utf8(in, pos, cp);
    if (len == 0) {
      throw Error(ErrorCode::kInvalidEncoding, "submission is not valid UTF-8");
    }
    const bool invisible = is_invisible_codepoint(cp);
    if (cp == '\r') {
      stage.push_back('\n');
      if (pos + 1 < in.size() && in[pos + 1] == '\n') {
        ++pos;
      }
    } else if (invisible || is_stray_control(cp)) {
      if (!sites.empty() && sites.back().pos == stage.size() && sites.back().invisible == invisible) {
        sites.back().codepoints.push_back(cp);
      } else {
        sites.push_back(RemovalSite{stage.size(), invisible, {cp}});
      }
    } else {
      stage.append(in.substr(pos, len));
    }
    pos += len;
  }

  std::vector<std::size_t> positions;
  positions.reserve(sites.size());
  for (const RemovalSite& site : sites) {
    positions.push_back(site.pos);
  }
  NormalizedText result;
  result.text = nfc_with_positions(stage, positions);

  for (std::size_t i = 0; i < sites.size(); ++i) {
    const ByteSpan span = enclosing_token(result.text, positions[i]);
    InjectionFlag flag = removal_flag(sites[i], result.text, span);
    // Several removal sites inside one word collapse into one flag.
    auto same = std::find_if(result.flags.begin(), result.flags.end(), [&](const InjectionFlag& f) {
      return f.rule_id == flag.rule_id && f.span == flag.span;
    });
    if (same != result.flags.end()) {
      RemovalSite merged = sites[i];
      merged.codepoints.clear();
      for (std::size_t j = 0; j <= i; ++j) {
        if (sites[j].invisible == sites[i].invisible &&
            enclosing_token(result.text, positions[j]) == span) {
          merged.codepoints.insert(merged.codepoints.end(), sites[j].codepoints.begin(),
                                   sites[j].codepoints.end());
        }
      }
      *same = removal_flag(merged, result.text, span);
    } else {
      result.flags.push_back(std::move(flag));
    }
  }
  sort_flags(result.flags);
  return result;
}

// ---- RuleSet ----

struct RuleSet::Impl {
  std::string version;
  std::vector<Rule> rules;
  std::vector<boost::regex> compiled;
};

RuleSet::RuleSet(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
RuleSet::RuleSet(RuleSet&&) noexcept = default;
RuleSet& RuleSet::operator=(RuleSet&&) noexcept = default;
RuleSet::~RuleSet() = default;

RuleSet RuleSet::parse(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParseError, std::string("rules file is not valid JSON: ") + ex.what());
  }
  auto impl = std::make_unique<Impl>();
  try {
    impl->version = doc.at("version").get<std::string>();
    for (const auto& record : doc.at("rules")) {
      Rule rule;
      rule.id = record.at("id").get<std::string>();
      rule.severity = parse_severity(record.at("severity").get<std::string>());
      rule.pattern = record.at("pattern").get<std::string>();
      rule.description = record.value("description", std::string{});
      impl->rules.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParseError, std::string("malformed rules file: ") + ex.what());
  }
  if (impl->version.empty()) {
    throw Error(ErrorCode::kParseError, "rules file has an empty version");
  }
  for (const Rule& rule : impl->rules) {
    try {
      impl->compiled.emplace_back(rule.pattern, boost::regex::perl | boost::regex::icase);
    } catch (const boost::regex_error& ex) {
      throw Error(ErrorCode::kParseError,
                  "rule '" + rule.id + "' has an invalid pattern: " + ex.what());
    }
  }
  return RuleSet(std::move(impl));
}

RuleSet RuleSet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kParseError, "cannot open rules file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const RuleSet& RuleSet::builtin() {
  static const RuleSet rules = parse(kDefaultRulesJson);
  return rules;
}

const std::string& RuleSet::version() const { return impl_->version; }

const std::vector<Rule>& RuleSet::rules() const { return impl_->rules; }

std::vector<InjectionFlag> RuleSet::scan(std::string_view text) const {
  std::vector<InjectionFlag> flags;
  for (std::size_t i = 0; i < impl_->rules.size(); ++i) {
    const Rule& rule = impl_->rules[i];
    boost::cregex_iterator it(text.data(), text.data() + text.size(), impl_->compiled[i]);
    for (const boost::cregex_iterator end; it != end; ++it) {
      const auto& m = (*it)[0];
      if (m.length() == 0) {
        continue;
      }
      const auto begin = static_cast<std::size_t>(m.first - text.data());
      const auto stop = static_cast<std::size_t>(m.second - text.data());
      // Different patterns of one rule can hit the same text; keep one flag.
      const bool duplicate = std::any_of(flags.begin(), flags.end(), [&](const InjectionFlag& f) {
        return f.rule_id == rule.id && f.span.begin < stop && begin < f.span.end;
      });
      if (duplicate) {
        continue;
      }
      flags.push_back(InjectionFlag{rule.id, rule.severity, ByteSpan{begin, stop},
                                    std::string(text.substr(begin, stop - begin)),
                                    rule.description});
    }
  }
  sort_flags(flags);
  return flags;
}

std::vector<InjectionFlag> scan_injection(std::string_view text, const RuleSet& rules) {
  return rules.scan(text);
}

SanitizedSubmission sanitize(const RawSubmission& raw, const RuleSet& rules) {
  SanitizedSubmission out;
  out.original_digest = sha256_hex(raw.bytes);
  NormalizedText normalized = normalize(raw);
  if (trim(normalized.text).empty()) {
    throw Error(ErrorCode::kEmptySubmission, "submission contains no visible text");
  }
  out.text = std::move(normalized.text);
  out.flags = std::move(normalized.flags);
  std::vector<InjectionFlag> found = rules.scan(out.text);
  out.flags.insert(out.flags.end(), std::make_move_iterator(found.begin()),
                   std::make_move_iterator(found.end()));
  sort_flags(out.flags);
  out.word_count = count_words(out.text);
  return out;
}

}  // namespace viva::guard
