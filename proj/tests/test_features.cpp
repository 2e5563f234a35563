#include "doctest.h"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "bmt/features.hpp"
#include "bmt/rng.hpp"
#include "bmt/unicode.hpp"
#include "bmt/verify/suite.hpp"

using namespace bmt;

namespace {

TweetRecord tweet(std::string text) {
  TweetRecord r;
  r.id = "t";
  r.text = std::move(text);
  return r;
}

std::string random_utf8(Rng& rng, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    switch (rng.uniform_int(4)) {
      case 0: out += static_cast<char>(0x20 + rng.uniform_int(95)); break;
      case 1: out += static_cast<char>(rng.uniform_int(256)); break;  // may be malformed
      case 2: unicode::append_utf8(out, static_cast<char32_t>(0x80 + rng.uniform_int(0xD700))); break;
      default: unicode::append_utf8(out, static_cast<char32_t>(0x10000 + rng.uniform_int(0x10000))); break;
    }
  }
  return out;
}

const SentimentLexicon& sl() { return builtin_sentiment_lexicon(); }
const PosLexicon& pl() { return builtin_pos_lexicon(); }

}  // namespace

TEST_CASE("tokenize examples") {
  CHECK(tokenize("").empty());
  const std::vector<Token> expected{{Token::Kind::kWord, "hi"},
                                    {Token::Kind::kMention, "@a"},
                                    {Token::Kind::kHashtag, "#b"},
                                    {Token::Kind::kUrl, "http://t.co/x"}};
  CHECK(tokenize("Hi @a #b http://t.co/x") == expected);
  CHECK(tokenize("  ...  !!").empty());
  CHECK(tokenize("(Hello),") == std::vector<Token>{{Token::Kind::kWord, "hello"}});
  CHECK(tokenize("@ # #!").empty());
  CHECK(tokenize("@_x") == std::vector<Token>{{Token::Kind::kMention, "@_x"}});
  CHECK(looks_like_url("bit.ly/abc"));
  CHECK(looks_like_url("HTTPS://example.com"));
  CHECK_FALSE(looks_like_url("example.com"));
}

TEST_CASE("extract_features examples") {
  FeatureVector zero{};
  CHECK(extract_features(tweet(""), sl(), pl()) == zero);

  TweetRecord t = tweet("Go!! @a @b #x http://t.co/y");
  t.is_reply = true;
  t.media_count = 1;
  const auto f = extract_features(t, sl(), pl());
  CHECK(f[0] == 2.0);
  CHECK(f[1] == 1.0);
  CHECK(f[2] == 1.0);
  CHECK(f[3] == 1.0);
  CHECK(f[4] == 1.0);
  // 27 Unicode scalar values.
  CHECK(f[6] == 27.0);
}

TEST_CASE("special characters and length count code points") {
  const auto f = extract_features(tweet("caf\xC3\xA9 \xE2\x9C\x93 ok!"), sl(), pl());
  CHECK(f[5] == 2.0);  // check mark and '!'
  CHECK(f[6] == 10.0);
}

TEST_CASE("sentiment is the mean of matched polarities") {
  SentimentLexicon lex;
  lex.polarity = {{"good", 0.5}, {"bad", -1.0}, {"great", 1.0}};
  CHECK(extract_features(tweet("good GOOD bad unknown"), lex, pl())[7] == doctest::Approx(0.0));
  CHECK(extract_features(tweet("great good"), lex, pl())[7] == 0.75);
  CHECK(extract_features(tweet("nothing here"), lex, pl())[7] == 0.0);
  // Hashtags and mentions are not words.
  CHECK(extract_features(tweet("#great @good"), lex, pl())[7] == 0.0);
}

TEST_CASE("part-of-speech counts") {
  PosLexicon lex;
  lex.words = {{"i", PosTag::kPronoun}, {"run", PosTag::kVerb}, {"the", PosTag::kOther}};
  lex.suffixes = {{"ing", PosTag::kVerb}, {"ful", PosTag::kAdjective}};
  CHECK(lex.tag("running") == PosTag::kVerb);
  CHECK(lex.tag("ing") == PosTag::kNoun);  // suffix must be strictly shorter
  CHECK(lex.tag("zebra") == PosTag::kNoun);
  const auto f = extract_features(tweet("I run the joyful dog running"), sl(), lex);
  CHECK(f[8] == 1.0);
  CHECK(f[9] == 1.0);
  CHECK(f[10] == 1.0);
  CHECK(f[11] == 2.0);

  TweetRecord tagged = tweet("I run fast");
  tagged.pos_tags = std::vector<std::string>{"noun", "adjective", "adjective"};
  const auto g = extract_features(tagged, sl(), lex);
  CHECK(g[8] == 1.0);
  CHECK(g[9] == 2.0);
  CHECK(g[11] == 0.0);
}

TEST_CASE("entity metadata takes precedence over the text") {
  TweetRecord t = tweet("@a @b #x http://t.co/1 http://t.co/2");
  t.mentions = std::vector<std::string>{"u1", "u2", "u3", "u4", "u5"};
  t.hashtags = std::vector<std::string>{};
  t.urls = std::vector<std::string>{"http://example.org"};
  const auto f = extract_features(t, sl(), pl());
  CHECK(f[0] == 5.0);
  CHECK(f[1] == 0.0);
  CHECK(f[2] == 1.0);
}

TEST_CASE("extract_features is total and respects its ranges") {
  Rng rng(1);
  SentimentLexicon extreme;
  extreme.polarity = {{"a", 1.0}, {"b", -1.0}, {"c", 1.0}};
  for (int trial = 0; trial < 2000; ++trial) {
    TweetRecord t = tweet(random_utf8(rng, rng.uniform_int(120)));
    if (trial % 3 == 0) t.text += " a c c a b a";
    t.is_reply = rng.bernoulli(0.5);
    t.media_count = static_cast<std::uint32_t>(rng.uniform_int(5));
    FeatureVector f;
    REQUIRE_NOTHROW(f = extract_features(t, trial % 2 ? extreme : sl(), pl()));
    CHECK(extract_features(t, trial % 2 ? extreme : sl(), pl()) == f);
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      if (i == 7) continue;
      CHECK(f[i] >= 0.0);
      CHECK(f[i] == std::floor(f[i]));
    }
    CHECK((f[4] == 0.0 || f[4] == 1.0));
    CHECK(f[7] >= -1.0);
    CHECK(f[7] <= 1.0);
    CHECK(f[0] + f[1] + f[2] <= static_cast<double>(tokenize(t.text).size()));
  }
}

TEST_CASE("features and tokens agree with the reference extractor") {
  const auto r = verify::feature_oracle_check(200, 77);
  CAPTURE(r.detail);
  CHECK(r.measured == 0.0);
  CHECK(r.passed);
}

TEST_CASE("sentiment lexicon parsing") {
  std::istringstream one("good\t0.5\n");
  CHECK(parse_sentiment_lexicon(one).lexicon.polarity == std::map<std::string, double, std::less<>>{{"good", 0.5}});
  std::istringstream empty("");
  CHECK(parse_sentiment_lexicon(empty).lexicon.polarity.empty());

  std::istringstream dup("# comment\ngood\t0.5\ngood\t0.25\n");
  auto d = parse_sentiment_lexicon(dup);
  CHECK(d.lexicon.polarity.at("good") == 0.25);
  CHECK(d.warnings.size() == 1);

  std::istringstream bad("good\t0.5\nbroken line\n");
  try {
    parse_sentiment_lexicon(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream range("good\t1.5\n");
  CHECK_THROWS_AS(parse_sentiment_lexicon(range), RangeError);
}

TEST_CASE("pos lexicon parsing") {
  std::istringstream in("[words]\nshe\tpronoun\n[suffixes]\nly\tadjective\ned\tverb\n");
  auto lex = parse_pos_lexicon(in).lexicon;
  CHECK(lex.words.at("she") == PosTag::kPronoun);
  REQUIRE(lex.suffixes.size() == 2);
  CHECK(lex.suffixes[0].first == "ly");
  std::istringstream orphan("she\tpronoun\n");
  CHECK_THROWS_AS(parse_pos_lexicon(orphan), ParseError);
  std::istringstream unknown("[words]\nshe\tthing\n");
  CHECK_THROWS_AS(parse_pos_lexicon(unknown), ParseError);
}

TEST_CASE("bundled lexicons round-trip") {
  CHECK(builtin_sentiment_lexicon().polarity.size() == 60);
  std::istringstream s(serialize(builtin_sentiment_lexicon()));
  CHECK(parse_sentiment_lexicon(s).lexicon == builtin_sentiment_lexicon());
  std::istringstream p(serialize(builtin_pos_lexicon()));
  CHECK(parse_pos_lexicon(p).lexicon == builtin_pos_lexicon());

  std::istringstream raw(std::string{builtin_sentiment_lexicon_text()});
  auto loaded = parse_sentiment_lexicon(raw);
  CHECK(loaded.warnings.empty());
  CHECK(loaded.lexicon == builtin_sentiment_lexicon());
}
