#include <algorithm>
#include <regex>
#include <sstream>

#include "viva/engine/provider.h"

namespace viva::engine {
namespace {

constexpr std::size_t kMaxQuoteChars = 300;

int max_questions_from_prompt(const std::string& system_prompt) {
  static const std::regex total(R"re(Ask a total of (\d+)(?:-(\d+))? question)re");
  std::smatch m;
  if (!std::regex_search(system_prompt, m, total)) {
    return 5;
  }
  return std::stoi(m[2].matched ? m[2].str() : m[1].str());
}

std::string submission_text(const PromptBundle& bundle) {
  for (const PromptMessage& msg : bundle.conversation) {
    if (msg.role != Speaker::kOperator) continue;
    const auto begin = msg.content.find(kSubmissionBegin);
    const auto end = msg.content.rfind(kSubmissionEnd);
    if (begin != std::string::npos && end != std::string::npos && end > begin) {
      const auto start = begin + kSubmissionBegin.size();
      return msg.content.substr(start, end - start);
    }
  }
  return {};
}

// Keeps the quote inert: no braces or double quotes can reach the question.
std::string quotable(std::string sentence) {
  for (char& c : sentence) {
    if (c == '{') c = '(';
    if (c == '}') c = ')';
    if (c == '"') c = '\'';
    if (c == '\n' || c == '\t') c = ' ';
  }
  if (sentence.size() > kMaxQuoteChars) {
    std::size_t cut = sentence.rfind(' ', kMaxQuoteChars);
    if (cut == std::string::npos || cut == 0) cut = kMaxQuoteChars;
    while (cut > 0 && (static_cast<unsigned char>(sentence[cut]) & 0xC0) == 0x80) --cut;
    sentence = sentence.substr(0, cut) + " ...";
  }
  return sentence;
}

std::vector<std::string> all_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  const auto flush = [&] {
    std::string_view t = trim(current);
    if (!t.empty()) out.emplace_back(t);
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n' && i + 1 < text.size() && text[i + 1] == '\n') {
      flush();
      continue;
    }
    current.push_back(c);
    const bool terminal = c == '.' || c == '!' || c == '?';
    const bool at_break = i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
    if (terminal && at_break) flush();
  }
  flush();
  return out;
}

}  // namespace

std::vector<std::string> significant_sentences(std::string_view text) {
  std::vector<std::string> out;
  for (std::string& s : all_sentences(text)) {
    if (count_words(s) >= kSignificantSentenceWords) out.push_back(std::move(s));
  }
  return out;
}

int mock_confidence_score(int developed_answers) {
  return std::min(100, 40 + 10 * developed_answers);
}

std::string MockProvider::complete(const PromptBundle& bundle) {
  const int max_questions = max_questions_from_prompt(bundle.system_prompt);
  int questions = 0;
  int answers = 0;
  int developed = 0;
  for (const PromptMessage& msg : bundle.conversation) {
    if (msg.role == Speaker::kExaminer) ++questions;
    if (msg.role == Speaker::kCandidate) {
      ++answers;
      if (count_words(msg.content) >= kDevelopedAnswerWords) ++developed;
    }
  }

  if (answers >= max_questions) {
    const int score = mock_confidence_score(developed);
    std::ostringstream a;
    a << "The candidate answered " << answers << " of " << questions
      << " questions about specific passages quoted from the submitted work. " << developed
      << (developed == 1 ? " answer was" : " answers were")
      << " developed at length (at least " << kDevelopedAnswerWords
      << " words) and engaged with the quoted passage, while " << (answers - developed)
      << (answers - developed == 1 ? " was" : " were")
      << " brief. Depth, coherence, and accuracy were judged from the extent and specificity of "
         "each response, which is the deterministic criterion of this mock examiner rather than "
         "a reading of the argument itself. Confidence that the candidate is the author: "
      << score << " out of 100.";
    return to_verdict_json(FinalAssessment{a.str(), score});
  }

  std::vector<std::string> pool = significant_sentences(submission_text(bundle));
  if (pool.empty()) pool = all_sentences(submission_text(bundle));
  std::ostringstream q;
  if (pool.empty()) {
    q << "How did you arrive at the central argument of your submission, and why did you "
         "structure it the way you did?";
  } else {
    const std::string& sentence = pool[static_cast<std::size_t>(questions) % pool.size()];
    q << "Your work states: '" << quotable(sentence)
      << "' Why did you make this claim, and how does it support the wider argument of your "
         "work?";
  }
  return q.str();
}

}  // namespace viva::engine
