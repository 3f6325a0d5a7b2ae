#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "viva/common.h"

namespace viva::test {

inline std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(VIVA_FIXTURE_DIR) + "/" + name, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Timestamp at(const char* iso) { return parse_timestamp(iso); }

// Runs `fn` and returns the ErrorCode it raised, or nullopt.
template <typename Fn>
std::optional<ErrorCode> error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline std::string essay(const std::string& marker, int sentences = 8) {
  std::string out;
  for (int i = 0; i < sentences; ++i) {
    out += "Sentence " + std::to_string(i) + " about " + marker +
           " explains how the argument develops across several connected historical sources. ";
  }
  return out;
}

}  // namespace viva::test
