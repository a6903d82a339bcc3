#pragma once

// Locating prompt-template markers ("Input: ", "Output:") inside rendered or
// compressed prompt text. A marker only counts at the start of the text or
// after whitespace, so body words like "the input list" cannot match.
// Compression can collapse the newline before a marker into a plain space
// (removed spans detokenize to " "), which is why the boundary is any
// whitespace rather than "\n". Shared by the oracle backends and the
// compression-ratio statement stripper so both sides of the reward read the
// template the same way.

#include <string_view>

namespace shear::internal {

inline bool space_at(std::string_view text, size_t pos) {
  const char c = text[pos];
  return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

inline size_t first_landmark(std::string_view text, std::string_view mark) {
  for (size_t pos = text.find(mark); pos != std::string_view::npos;
       pos = text.find(mark, pos + 1)) {
    if (pos == 0 || space_at(text, pos - 1)) return pos;
  }
  return std::string_view::npos;
}

inline size_t last_landmark(std::string_view text, std::string_view mark) {
  for (size_t pos = text.rfind(mark); pos != std::string_view::npos;
       pos = (pos == 0 ? std::string_view::npos : text.rfind(mark, pos - 1))) {
    if (pos == 0 || space_at(text, pos - 1)) return pos;
  }
  return std::string_view::npos;
}

// Boundary whitespace between sections does not survive compression, so
// recovered bodies are right-trimmed.
inline std::string_view rtrim(std::string_view s) {
  while (!s.empty() && space_at(s, s.size() - 1)) s.remove_suffix(1);
  return s;
}

}  // namespace shear::internal
