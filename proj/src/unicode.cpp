#include "bmt/unicode.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace bmt::unicode {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

struct Range {
  char32_t lo, hi;
};

constexpr std::array kLetterRanges{
    Range{0x41, 0x5A},     Range{0x61, 0x7A},     Range{0xAA, 0xAA},
    Range{0xB5, 0xB5},     Range{0xBA, 0xBA},     Range{0xC0, 0xD6},
    Range{0xD8, 0xF6},     Range{0xF8, 0x24F},    Range{0x370, 0x373},
    Range{0x376, 0x377},   Range{0x37B, 0x37D},   Range{0x386, 0x386},
    Range{0x388, 0x3FF},   Range{0x400, 0x481},   Range{0x48A, 0x52F},
    Range{0x5D0, 0x5EA},   Range{0x620, 0x64A},   Range{0x671, 0x6D3},
    Range{0x904, 0x939},   Range{0x958, 0x961},   Range{0xE01, 0xE30},
    Range{0x1E00, 0x1FFF}, Range{0x3041, 0x3096}, Range{0x30A1, 0x30FA},
    Range{0x3400, 0x4DBF}, Range{0x4E00, 0x9FFF}, Range{0xAC00, 0xD7A3},
};

constexpr std::array kDigitRanges{
    Range{0x30, 0x39},   Range{0x660, 0x669}, Range{0x6F0, 0x6F9},
    Range{0x966, 0x96F}, Range{0xE50, 0xE59}, Range{0xFF10, 0xFF19},
};

template <std::size_t N>
bool in_ranges(const std::array<Range, N>& ranges, char32_t c) {
  auto it = std::upper_bound(ranges.begin(), ranges.end(), c,
                             [](char32_t v, const Range& r) { return v < r.lo; });
  if (it == ranges.begin()) return false;
  --it;
  return c >= it->lo && c <= it->hi;
}

}  // namespace

std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2; cp = b0 & 0x1F; min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3; cp = b0 & 0x0F; min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4; cp = b0 & 0x07; min = 0x10000;
    } else {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    bool ok = i + static_cast<std::size_t>(len) <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((b & 0xC0) != 0x80) ok = false;
      else cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok || cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
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

std::string encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) append_utf8(out, c);
  return out;
}

bool is_whitespace(char32_t c) {
  return c == 0x20 || (c >= 0x09 && c <= 0x0D) || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

bool is_letter(char32_t c) { return in_ranges(kLetterRanges, c); }
bool is_digit(char32_t c) { return in_ranges(kDigitRanges, c); }

char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c < 0xC0) return c;
  if ((c >= 0xC0 && c <= 0xDE) && c != 0xD7) return c + 32;
  // Latin Extended-A alternates upper/lower; the parity flips twice.
  if (c >= 0x100 && c <= 0x137) return (c & 1) == 0 ? c + 1 : c;
  if (c >= 0x139 && c <= 0x148) return (c & 1) == 1 ? c + 1 : c;
  if (c >= 0x14A && c <= 0x177) return (c & 1) == 0 ? c + 1 : c;
  if (c >= 0x179 && c <= 0x17E) return (c & 1) == 1 ? c + 1 : c;
  if (c == 0x178) return 0xFF;
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

std::u32string to_lower(std::u32string_view text) {
  std::u32string out(text);
  for (auto& c : out) c = to_lower(c);
  return out;
}

}  // namespace bmt::unicode
