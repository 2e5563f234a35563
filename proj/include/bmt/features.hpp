#pragma once

// The twelve tweet-content features, in fixed order:
//   0 mentions   1 hashtags   2 urls        3 media count
//   4 is reply   5 special characters (neither alphanumeric nor whitespace)
//   6 length in Unicode scalar values       7 mean lexicon polarity in [-1, 1]
//   8 nouns      9 adjectives 10 pronouns   11 verbs

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bmt/errors.hpp"
#include "bmt/tweet.hpp"

namespace bmt {

inline constexpr std::size_t kNumFeatures = 12;
using FeatureVector = std::array<double, kNumFeatures>;

const std::array<std::string_view, kNumFeatures>& feature_names();

struct Token {
  enum class Kind { kWord, kMention, kHashtag, kUrl };
  Kind kind = Kind::kWord;
  std::string text;  // words lowercased and stripped; mentions/hashtags keep the sigil

  bool operator==(const Token&) const = default;
};

/// Whitespace split, then classify each piece. Pieces that are only
/// punctuation produce no token.
std::vector<Token> tokenize(std::string_view text);

/// True for "http://", "https://" prefixes and bare links on known shorteners
/// such as "bit.ly/..." or "t.co/...".
bool looks_like_url(std::string_view piece);

// ---------------------------------------------------------------------------

/// Polarity value outside [-1, 1].
class RangeError : public ParseError {
 public:
  using ParseError::ParseError;
};

struct SentimentLexicon {
  std::map<std::string, double, std::less<>> polarity;
  bool operator==(const SentimentLexicon&) const = default;
};

enum class PosTag { kNoun, kAdjective, kPronoun, kVerb, kOther };
std::string_view pos_tag_name(PosTag t);
std::optional<PosTag> parse_pos_tag(std::string_view s);

struct PosLexicon {
  std::map<std::string, PosTag, std::less<>> words;
  std::vector<std::pair<std::string, PosTag>> suffixes;  // first match wins
  PosTag default_tag = PosTag::kNoun;

  /// Exact word entry, else the first suffix strictly shorter than the
  /// token, else the default tag.
  PosTag tag(std::string_view word) const;
  bool operator==(const PosLexicon&) const = default;
};

template <typename Lexicon>
struct LexiconLoad {
  Lexicon lexicon;
  std::vector<std::string> warnings;  // duplicate entries (last one wins)
};

LexiconLoad<SentimentLexicon> parse_sentiment_lexicon(std::istream& in);
LexiconLoad<PosLexicon> parse_pos_lexicon(std::istream& in);
LexiconLoad<SentimentLexicon> load_sentiment_lexicon(const std::string& path);
LexiconLoad<PosLexicon> load_pos_lexicon(const std::string& path);
std::string serialize(const SentimentLexicon& lex);
std::string serialize(const PosLexicon& lex);

/// Small English demo lexicons compiled into the library.
const SentimentLexicon& builtin_sentiment_lexicon();
const PosLexicon& builtin_pos_lexicon();
std::string_view builtin_sentiment_lexicon_text();
std::string_view builtin_pos_lexicon_text();

FeatureVector extract_features(const TweetRecord& tweet, const SentimentLexicon& sentiment,
                               const PosLexicon& pos);

}  // namespace bmt
