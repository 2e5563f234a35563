#include "bmt/features.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "bmt/unicode.hpp"

namespace bmt {

namespace {

bool is_word_char(char32_t c) { return c == U'_' || unicode::is_alnum(c); }

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

constexpr std::array<std::string_view, 14> kShorteners{
    "bit.ly/", "t.co/",   "goo.gl/",  "tinyurl.com/", "ow.ly/",   "buff.ly/",    "is.gd/",
    "dlvr.it/", "ift.tt/", "tiny.cc/", "rebrand.ly/",  "cutt.ly/", "shorturl.at/", "lnkd.in/"};

Token classify(std::u32string_view piece) {
  if (piece.size() > 1 && (piece[0] == U'@' || piece[0] == U'#') && is_word_char(piece[1])) {
    std::size_t end = 1;
    while (end < piece.size() && is_word_char(piece[end])) ++end;
    return {piece[0] == U'@' ? Token::Kind::kMention : Token::Kind::kHashtag,
            unicode::encode(piece.substr(0, end))};
  }
  const std::string utf8 = unicode::encode(piece);
  if (looks_like_url(utf8)) return {Token::Kind::kUrl, utf8};
  std::size_t b = 0, e = piece.size();
  while (b < e && !unicode::is_alnum(piece[b])) ++b;
  while (e > b && !unicode::is_alnum(piece[e - 1])) --e;
  return {Token::Kind::kWord, unicode::encode(unicode::to_lower(piece.substr(b, e - b)))};
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n'))
    --e;
  return std::string(s.substr(b, e - b));
}

std::string lower_token(std::string_view s) {
  return unicode::encode(unicode::to_lower(unicode::decode(s)));
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

const std::array<std::string_view, kNumFeatures>& feature_names() {
  static const std::array<std::string_view, kNumFeatures> names{
      "mentions", "hashtags",  "urls",       "media",    "is_reply",   "special_chars",
      "length",   "sentiment", "nouns",      "adjectives", "pronouns", "verbs"};
  return names;
}

bool looks_like_url(std::string_view piece) {
  const std::string s = ascii_lower(piece);
  if (s.starts_with("http://") || s.starts_with("https://")) return true;
  std::string_view rest = s;
  if (rest.starts_with("www.")) rest.remove_prefix(4);
  return std::any_of(kShorteners.begin(), kShorteners.end(),
                     [&](std::string_view d) { return rest.starts_with(d); });
}

std::vector<Token> tokenize(std::string_view text) {
  const std::u32string cps = unicode::decode(text);
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && unicode::is_whitespace(cps[i])) ++i;
    std::size_t j = i;
    while (j < cps.size() && !unicode::is_whitespace(cps[j])) ++j;
    if (j > i) {
      Token t = classify(std::u32string_view(cps).substr(i, j - i));
      if (!(t.kind == Token::Kind::kWord && t.text.empty())) tokens.push_back(std::move(t));
    }
    i = j;
  }
  return tokens;
}

// ---------------------------------------------------------------------------

std::string_view pos_tag_name(PosTag t) {
  switch (t) {
    case PosTag::kNoun: return "noun";
    case PosTag::kAdjective: return "adjective";
    case PosTag::kPronoun: return "pronoun";
    case PosTag::kVerb: return "verb";
    case PosTag::kOther: return "other";
  }
  return "other";
}

std::optional<PosTag> parse_pos_tag(std::string_view s) {
  for (PosTag t : {PosTag::kNoun, PosTag::kAdjective, PosTag::kPronoun, PosTag::kVerb,
                   PosTag::kOther})
    if (pos_tag_name(t) == s) return t;
  return std::nullopt;
}

PosTag PosLexicon::tag(std::string_view word) const {
  if (auto it = words.find(word); it != words.end()) return it->second;
  for (const auto& [suffix, t] : suffixes)
    if (word.size() > suffix.size() && word.ends_with(suffix)) return t;
  return default_tag;
}

LexiconLoad<SentimentLexicon> parse_sentiment_lexicon(std::istream& in) {
  LexiconLoad<SentimentLexicon> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw ParseError(lineno, "expected 'token<TAB>polarity'");
    const std::string token = lower_token(trim(std::string_view(line).substr(0, tab)));
    const std::string value = trim(std::string_view(line).substr(tab + 1));
    if (token.empty()) throw ParseError(lineno, "empty token");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
      throw ParseError(lineno, "polarity '" + value + "' is not a number");
    if (!(v >= -1.0 && v <= 1.0))
      throw RangeError(lineno, "polarity " + value + " outside [-1, 1]");
    if (out.lexicon.polarity.contains(token))
      out.warnings.push_back("line " + std::to_string(lineno) + ": duplicate token '" + token +
                             "', last entry wins");
    out.lexicon.polarity[token] = v;
  }
  return out;
}

LexiconLoad<PosLexicon> parse_pos_lexicon(std::istream& in) {
  LexiconLoad<PosLexicon> out;
  enum class Section { kNone, kWords, kSuffixes } section = Section::kNone;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t == "[words]") { section = Section::kWords; continue; }
    if (t == "[suffixes]") { section = Section::kSuffixes; continue; }
    if (section == Section::kNone)
      throw ParseError(lineno, "entry before any [words] or [suffixes] section");
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(lineno, "expected 'entry<TAB>tag'");
    const std::string key = lower_token(trim(std::string_view(line).substr(0, tab)));
    const std::string tag_name = trim(std::string_view(line).substr(tab + 1));
    const auto tag = parse_pos_tag(tag_name);
    if (!tag) throw ParseError(lineno, "unknown tag '" + tag_name + "'");
    if (key.empty()) throw ParseError(lineno, "empty entry");
    if (section == Section::kWords) {
      if (out.lexicon.words.contains(key))
        out.warnings.push_back("line " + std::to_string(lineno) + ": duplicate word '" + key +
                               "', last entry wins");
      out.lexicon.words[key] = *tag;
    } else {
      auto& sfx = out.lexicon.suffixes;
      auto it = std::find_if(sfx.begin(), sfx.end(), [&](const auto& e) { return e.first == key; });
      if (it != sfx.end()) {
        out.warnings.push_back("line " + std::to_string(lineno) + ": duplicate suffix '" + key +
                               "', last entry wins");
        sfx.erase(it);
      }
      sfx.emplace_back(key, *tag);
    }
  }
  return out;
}

namespace {
std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}
}  // namespace

LexiconLoad<SentimentLexicon> load_sentiment_lexicon(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_sentiment_lexicon(in);
}

LexiconLoad<PosLexicon> load_pos_lexicon(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_pos_lexicon(in);
}

std::string serialize(const SentimentLexicon& lex) {
  std::string out;
  for (const auto& [token, v] : lex.polarity) out += token + "\t" + format_double(v) + "\n";
  return out;
}

std::string serialize(const PosLexicon& lex) {
  std::string out = "[words]\n";
  for (const auto& [w, t] : lex.words) out += w + "\t" + std::string(pos_tag_name(t)) + "\n";
  out += "[suffixes]\n";
  for (const auto& [s, t] : lex.suffixes) out += s + "\t" + std::string(pos_tag_name(t)) + "\n";
  return out;
}

const SentimentLexicon& builtin_sentiment_lexicon() {
  static const SentimentLexicon lex = [] {
    std::istringstream in{std::string(builtin_sentiment_lexicon_text())};
    return parse_sentiment_lexicon(in).lexicon;
  }();
  return lex;
}

const PosLexicon& builtin_pos_lexicon() {
  static const PosLexicon lex = [] {
    std::istringstream in{std::string(builtin_pos_lexicon_text())};
    return parse_pos_lexicon(in).lexicon;
  }();
  return lex;
}

// ---------------------------------------------------------------------------

FeatureVector extract_features(const TweetRecord& tweet, const SentimentLexicon& sentiment,
                               const PosLexicon& pos) {
  const std::vector<Token> tokens = tokenize(tweet.text);
  std::size_t mentions = 0, hashtags = 0, urls = 0;
  std::vector<const std::string*> words;
  for (const auto& t : tokens) {
    switch (t.kind) {
      case Token::Kind::kMention: ++mentions; break;
      case Token::Kind::kHashtag: ++hashtags; break;
      case Token::Kind::kUrl: ++urls; break;
      case Token::Kind::kWord: words.push_back(&t.text); break;
    }
  }
  if (tweet.mentions) mentions = tweet.mentions->size();
  if (tweet.hashtags) hashtags = tweet.hashtags->size();
  if (tweet.urls) urls = tweet.urls->size();

  const std::u32string cps = unicode::decode(tweet.text);
  const auto special = std::count_if(cps.begin(), cps.end(), [](char32_t c) {
    return !unicode::is_alnum(c) && !unicode::is_whitespace(c);
  });

  double polarity_sum = 0.0;
  std::size_t matched = 0;
  for (const auto* w : words) {
    if (auto it = sentiment.polarity.find(*w); it != sentiment.polarity.end()) {
      polarity_sum += it->second;
      ++matched;
    }
  }
  const double sentiment_score =
      matched == 0 ? 0.0 : std::clamp(polarity_sum / static_cast<double>(matched), -1.0, 1.0);

  std::array<std::size_t, 5> tag_counts{};
  const bool external_tags = tweet.pos_tags && tweet.pos_tags->size() == words.size();
  for (std::size_t i = 0; i < words.size(); ++i) {
    PosTag t = external_tags ? parse_pos_tag((*tweet.pos_tags)[i]).value_or(PosTag::kOther)
                             : pos.tag(*words[i]);
    ++tag_counts[static_cast<std::size_t>(t)];
  }

  return {static_cast<double>(mentions),
          static_cast<double>(hashtags),
          static_cast<double>(urls),
          static_cast<double>(tweet.media_count),
          tweet.is_reply ? 1.0 : 0.0,
          static_cast<double>(special),
          static_cast<double>(cps.size()),
          sentiment_score,
          static_cast<double>(tag_counts[static_cast<std::size_t>(PosTag::kNoun)]),
          static_cast<double>(tag_counts[static_cast<std::size_t>(PosTag::kAdjective)]),
          static_cast<double>(tag_counts[static_cast<std::size_t>(PosTag::kPronoun)]),
          static_cast<double>(tag_counts[static_cast<std::size_t>(PosTag::kVerb)])};
}

}  // namespace bmt
