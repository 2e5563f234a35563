#include "bmt/verify/oracles.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>
#include <string>

namespace bmt::verify {

namespace {

const std::regex& entity_re() {
  static const std::regex re(R"(^([@#])(\w+))");
  return re;
}

const std::regex& url_re() {
  static const std::regex re(
      R"(^(https?://|(www\.)?(bit\.ly|t\.co|goo\.gl|tinyurl\.com|ow\.ly|buff\.ly|is\.gd|dlvr\.it|ift\.tt|tiny\.cc|rebrand\.ly|cutt\.ly|shorturl\.at|lnkd\.in)/))",
      std::regex::icase);
  return re;
}

const std::regex& edge_punct_re() {
  static const std::regex re(R"(^[^A-Za-z0-9]+|[^A-Za-z0-9]+$)");
  return re;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

std::vector<Token> scan_tokens(std::string_view text) {
  std::vector<Token> out;
  std::istringstream in{std::string(text)};
  std::string piece;
  while (in >> piece) {
    std::smatch m;
    if (std::regex_search(piece, m, entity_re())) {
      out.push_back({m[1] == "@" ? Token::Kind::kMention : Token::Kind::kHashtag, m[0].str()});
    } else if (std::regex_search(piece, url_re())) {
      out.push_back({Token::Kind::kUrl, piece});
    } else {
      std::string word = lower(std::regex_replace(piece, edge_punct_re(), ""));
      if (!word.empty()) out.push_back({Token::Kind::kWord, word});
    }
  }
  return out;
}

FeatureVector reference_features(const TweetRecord& tweet, const SentimentLexicon& sentiment,
                                 const PosLexicon& pos) {
  FeatureVector f{};
  const auto tokens = scan_tokens(tweet.text);
  std::vector<std::string> words;
  for (const auto& t : tokens) {
    if (t.kind == Token::Kind::kMention) f[0] += 1;
    if (t.kind == Token::Kind::kHashtag) f[1] += 1;
    if (t.kind == Token::Kind::kUrl) f[2] += 1;
    if (t.kind == Token::Kind::kWord) words.push_back(t.text);
  }
  if (tweet.mentions) f[0] = static_cast<double>(tweet.mentions->size());
  if (tweet.hashtags) f[1] = static_cast<double>(tweet.hashtags->size());
  if (tweet.urls) f[2] = static_cast<double>(tweet.urls->size());
  f[3] = tweet.media_count;
  f[4] = tweet.is_reply ? 1 : 0;
  for (unsigned char c : tweet.text) {
    if (!std::isalnum(c) && !std::isspace(c)) f[5] += 1;
    f[6] += 1;
  }
  double sum = 0;
  int hits = 0;
  for (const auto& w : words) {
    auto it = sentiment.polarity.find(w);
    if (it == sentiment.polarity.end()) continue;
    sum += it->second;
    ++hits;
  }
  if (hits > 0) f[7] = std::min(1.0, std::max(-1.0, sum / hits));

  const bool use_external = tweet.pos_tags && tweet.pos_tags->size() == words.size();
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::string tag;
    if (use_external) {
      tag = (*tweet.pos_tags)[i];
    } else if (auto it = pos.words.find(words[i]); it != pos.words.end()) {
      tag = pos_tag_name(it->second);
    } else {
      tag = pos_tag_name(pos.default_tag);
      for (const auto& [suffix, t] : pos.suffixes) {
        const std::string& w = words[i];
        if (w.size() > suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0) {
          tag = pos_tag_name(t);
          break;
        }
      }
    }
    if (tag == "noun") f[8] += 1;
    if (tag == "adjective") f[9] += 1;
    if (tag == "pronoun") f[10] += 1;
    if (tag == "verb") f[11] += 1;
  }
  return f;
}

MetricsReport recount_metrics(std::span<const int> predictions, std::span<const int> labels) {
  MetricsReport r;
  r.total = labels.size();
  double hits = 0;
  for (int c = 0; c < 2; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool is_c = labels[i] == c;
      const bool said_c = predictions[i] == c;
      if (is_c && said_c) ++tp;
      if (!is_c && said_c) ++fp;
      if (is_c && !said_c) ++fn;
      if (!is_c && !said_c) ++tn;
    }
    const auto cu = static_cast<std::size_t>(c);
    r.confusion[cu][cu] = tp;
    r.confusion[cu][1 - cu] = fn;
    auto& m = r.per_class[cu];
    m.support = tp + fn;
    m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = m.precision + m.recall == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    hits += static_cast<double>(tp);
    (void)tn;
  }
  const double n = static_cast<double>(r.total);
  r.accuracy = hits / n;
  const auto& a = r.per_class[0];
  const auto& b = r.per_class[1];
  r.macro = {(a.precision + b.precision) / 2, (a.recall + b.recall) / 2, (a.f1 + b.f1) / 2, r.total};
  const double wa = static_cast<double>(a.support) / n;
  const double wb = static_cast<double>(b.support) / n;
  r.weighted = {wa * a.precision + wb * b.precision, wa * a.recall + wb * b.recall,
                wa * a.f1 + wb * b.f1, r.total};
  r.micro = {r.accuracy, r.accuracy, r.accuracy, r.total};
  return r;
}

bool identical(const MetricsReport& a, const MetricsReport& b) {
  auto same = [](const ClassMetrics& x, const ClassMetrics& y) {
    return x.precision == y.precision && x.recall == y.recall && x.f1 == y.f1 &&
           x.support == y.support;
  };
  return a.confusion == b.confusion && same(a.per_class[0], b.per_class[0]) &&
         same(a.per_class[1], b.per_class[1]) && same(a.macro, b.macro) &&
         same(a.weighted, b.weighted) && same(a.micro, b.micro) && a.accuracy == b.accuracy &&
         a.total == b.total;
}

}  // namespace bmt::verify
