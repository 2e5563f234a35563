#pragma once

// Synthetic stand-in for the private blackmarket dataset. Blackmarket tweets
// come from promotional templates with shortened links, several hashtags and
// call-to-action wording; genuine tweets from conversational templates. A
// `difficulty` fraction of each class is drawn as boundary examples whose
// wording comes from the other class's pool. Engagement counts are
// label-conditional negative-binomial draws; those parameters are invented.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bmt/dataset.hpp"

namespace bmt {

inline constexpr int kSynthVersion = 1;

struct SynthConfig {
  std::size_t n_blackmarket = 1796;
  std::size_t n_genuine = 2000;
  double difficulty = 0.1;
  double genuine_url_prob = 0.2;
  double blackmarket_retweet_mean = 40.0;
  double blackmarket_like_mean = 60.0;
  double genuine_retweet_mean = 3.0;
  double genuine_like_mean = 8.0;
  double count_dispersion = 1.5;
  // Promotional, Entertainment, Spam, News, Politics, Others (percent).
  std::array<double, kNumCategories> category_weights{43.75, 15.89, 13.57, 7.86, 4.82, 14.11};

  /// Throws ConfigError.
  void validate() const;
  /// Sorted "key=value" lines for provenance sidecars.
  std::string describe() const;
};

/// Deterministic in (config, seed). Records are shuffled and numbered
/// "s000001", "s000002", ...; every record carries lang "en", entity lists,
/// label and (blackmarket only) category.
Dataset synth_generate(const SynthConfig& config, std::uint64_t seed);

/// Two-topic texts for checking hashtag pre-training: each text is a
/// sentence from one topic followed by that topic's single hashtag.
std::vector<std::string> synth_hashtag_corpus(std::size_t per_topic, std::uint64_t seed);

}  // namespace bmt
