#pragma once

// Independent reference implementations used to cross-check the library.
// They are deliberately written differently from the production code
// (regex scanning, direct counting) and are limited to ASCII text.

#include <span>
#include <string_view>
#include <vector>

#include "bmt/features.hpp"
#include "bmt/metrics.hpp"

namespace bmt::verify {

/// Regex-based tokenizer for ASCII text.
std::vector<Token> scan_tokens(std::string_view text);

/// Straightforward TF1-TF12 for ASCII text.
FeatureVector reference_features(const TweetRecord& tweet, const SentimentLexicon& sentiment,
                                 const PosLexicon& pos);

/// Metrics from per-class TP/FP/FN tallies counted pair by pair.
MetricsReport recount_metrics(std::span<const int> predictions, std::span<const int> labels);

/// Field-by-field exact comparison.
bool identical(const MetricsReport& a, const MetricsReport& b);

}  // namespace bmt::verify
