#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tagforge/error.hpp"

// UTF-8 helpers and the Python-flavoured string predicates used by the CRF
// feature templates. Case handling covers ASCII and the Latin-1 supplement,
// which is the full character range of the GMB data.
namespace tagforge::text {

inline bool utf8_valid(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t n = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) { ++i; continue; }
    if ((c & 0xE0) == 0xC0) { n = 1; cp = c & 0x1F; }
    else if ((c & 0xF0) == 0xE0) { n = 2; cp = c & 0x0F; }
    else if ((c & 0xF8) == 0xF0) { n = 3; cp = c & 0x07; }
    else return false;
    if (i + n >= s.size()) return false;
    for (std::size_t k = 1; k <= n; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong encodings and surrogates
    if ((n == 1 && cp < 0x80) || (n == 2 && cp < 0x800) || (n == 3 && cp < 0x10000)) return false;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += n + 1;
  }
  return true;
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string latin1_to_utf8(std::string_view s) {
  std::string out;
  out.reserve(s.size() + s.size() / 8);
  for (char ch : s) append_utf8(out, static_cast<unsigned char>(ch));
  return out;
}

// Decodes valid UTF-8 into code points. Invalid input is a contract violation.
inline std::vector<std::uint32_t> codepoints(std::string_view s) {
  std::vector<std::uint32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t n = c < 0x80 ? 0 : (c & 0xE0) == 0xC0 ? 1 : (c & 0xF0) == 0xE0 ? 2 : 3;
    std::uint32_t cp = n == 0 ? c : n == 1 ? (c & 0x1F) : n == 2 ? (c & 0x0F) : (c & 0x07);
    if (i + n >= s.size()) {
      throw Error(ErrorKind::Contract, "truncated UTF-8 sequence");
    }
    for (std::size_t k = 1; k <= n; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += n + 1;
  }
  return out;
}

inline std::string from_codepoints(const std::vector<std::uint32_t>& cps, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) append_utf8(out, cps[i]);
  return out;
}

inline bool is_upper_cp(std::uint32_t c) {
  return (c >= 'A' && c <= 'Z') || (c >= 0xC0 && c <= 0xDE && c != 0xD7);
}
inline bool is_lower_cp(std::uint32_t c) {
  return (c >= 'a' && c <= 'z') || (c >= 0xDF && c <= 0xFF && c != 0xF7);
}
inline bool is_digit_cp(std::uint32_t c) { return c >= '0' && c <= '9'; }

inline std::uint32_t lower_cp(std::uint32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  return c;
}

inline std::string lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::uint32_t c : codepoints(s)) append_utf8(out, lower_cp(c));
  return out;
}

// str.isupper(): at least one cased character and no lower-case ones.
inline bool is_upper(std::string_view s) {
  bool cased = false;
  for (std::uint32_t c : codepoints(s)) {
    if (is_lower_cp(c)) return false;
    if (is_upper_cp(c)) cased = true;
  }
  return cased;
}

// str.isdigit(): non-empty and all digits.
inline bool is_digit(std::string_view s) {
  if (s.empty()) return false;
  for (std::uint32_t c : codepoints(s)) {
    if (!is_digit_cp(c)) return false;
  }
  return true;
}

// str.istitle(): upper-case characters only follow uncased ones, lower-case
// only follow cased ones, and at least one cased character exists.
inline bool is_title(std::string_view s) {
  bool prev_cased = false;
  bool any = false;
  for (std::uint32_t c : codepoints(s)) {
    if (is_upper_cp(c)) {
      if (prev_cased) return false;
      prev_cased = true;
      any = true;
    } else if (is_lower_cp(c)) {
      if (!prev_cased) return false;
      prev_cased = true;
      any = true;
    } else {
      prev_cased = false;
    }
  }
  return any;
}

// Last `n` characters (code points); the whole string when shorter.
inline std::string suffix(std::string_view s, std::size_t n) {
  auto cps = codepoints(s);
  std::size_t begin = cps.size() > n ? cps.size() - n : 0;
  return from_codepoints(cps, begin, cps.size());
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r' || s[i] == '\n')) ++i;
    std::size_t j = i;
    while (j < s.size() && !(s[j] == ' ' || s[j] == '\t' || s[j] == '\r' || s[j] == '\n')) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// One CSV record (no embedded newlines). Double quotes delimit fields and
// `""` escapes a quote inside a quoted field.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool field_started_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty() && !field_started_quoted) {
      quoted = true;
      field_started_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      field_started_quoted = false;
    } else if (c == '\r' && i + 1 == line.size()) {
      // tolerate CRLF
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) {
    throw Error(ErrorKind::MalformedRow, "unterminated quoted field at line " + std::to_string(line_no));
  }
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace tagforge::text
