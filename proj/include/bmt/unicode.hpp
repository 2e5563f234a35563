#pragma once

// Minimal, locale-independent Unicode handling for tweet text. Character
// classes come from a fixed table of code-point ranges so that results never
// depend on the host's C locale.

#include <string>
#include <string_view>
#include <vector>

namespace bmt::unicode {

/// Decodes UTF-8. Malformed sequences decode to U+FFFD, one per bad byte.
std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view text);
void append_utf8(std::string& out, char32_t cp);

bool is_whitespace(char32_t c);
/// Letters of the Latin, Greek, Cyrillic, Arabic, Hebrew, Devanagari, Thai,
/// Hangul, kana and CJK blocks, plus ASCII letters.
bool is_letter(char32_t c);
/// ASCII digits plus the decimal digit blocks of the scripts above.
bool is_digit(char32_t c);
inline bool is_alnum(char32_t c) { return is_letter(c) || is_digit(c); }
inline bool is_ascii_letter(char32_t c) {
  return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z');
}

/// Simple case folding for ASCII, Latin-1, Latin Extended-A pairs, Greek and
/// Cyrillic capitals. Other code points are returned unchanged.
char32_t to_lower(char32_t c);
std::u32string to_lower(std::u32string_view text);

}  // namespace bmt::unicode
