#pragma once

// Cross-validation harness: stratified folds, featurisation of a dataset
// under a pre-trained encoder, and the three-way model comparison.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bmt/dataset.hpp"
#include "bmt/encoder.hpp"
#include "bmt/features.hpp"
#include "bmt/metrics.hpp"
#include "bmt/model.hpp"

namespace bmt {

struct FoldSplit {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> folds;  // each sorted ascending
};

/// Stratified by label, deterministic in the seed. Throws DataError when a
/// class has fewer than k members.
FoldSplit kfold_split(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Indices not in fold `f`, ascending.
std::vector<std::size_t> training_indices(const FoldSplit& split, std::size_t f);

/// Percentage of false negatives (blackmarket predicted genuine) per
/// category. Empty when there are none. Uncategorised false negatives are
/// left out of both numerator and denominator.
std::map<Category, double> fn_breakdown(std::span<const int> predictions,
                                        std::span<const int> labels,
                                        std::span<const std::optional<Category>> categories);

// ---------------------------------------------------------------------------
// Encoder artifact and featurisation.

struct EncoderBundle {
  CharVocab chars;
  EncoderParams params;
};

TensorArchive encoder_to_archive(const EncoderBundle& e);
EncoderBundle encoder_from_archive(const TensorArchive& a);

struct Featurized {
  Matrix embeddings;  // n x D
  Matrix features;    // n x 12
  std::vector<int> labels;  // -1 when unlabeled
  Matrix counts;      // n x 2
  std::vector<std::optional<Category>> categories;
  std::vector<std::vector<int>> sequences;
};

Featurized featurize(const Dataset& d, const EncoderBundle& encoder,
                     const SentimentLexicon& sentiment, const PosLexicon& pos);

TrainData select(const Featurized& f, std::span<const std::size_t> rows);

// ---------------------------------------------------------------------------
// Comparison.

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across folds
};
MeanStd mean_std(std::span<const double> values);

struct ComparisonRow {
  std::string name;
  ModelConfig config;
  std::vector<MetricsReport> folds;
  MetricsReport pooled;  // confusion summed over folds
  std::map<Category, double> fn_breakdown;

  MeanStd macro_precision() const;
  MeanStd macro_recall() const;
  MeanStd macro_f1() const;
  MeanStd weighted_f1() const;
  MeanStd micro_f1() const;
};

struct ComparisonReport {
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::vector<ComparisonRow> rows;
};

inline constexpr const char* kRowMultitask = "Multitask";
inline constexpr const char* kRowSingleTask = "Single-task";
inline constexpr const char* kRowConcatMlp = "Feature-Concat-MLP";

/// The multitask model, the single-task classifier (lambda 0, no branch B)
/// and the concatenation MLP, all sharing the base hyperparameters.
std::vector<std::pair<std::string, ModelConfig>> comparison_configs(const ModelConfig& base);

/// Trains and evaluates every configuration on the same stratified folds.
/// Fold f trains with a model seed derived from (seed, f).
ComparisonReport run_comparison(const Featurized& data,
                                const std::vector<std::pair<std::string, ModelConfig>>& configs,
                                std::size_t k, std::uint64_t seed);

/// Stable-key JSON text (two-space indent, trailing newline).
std::string report_json(const ComparisonReport& r);
/// Aligned table for standard output.
std::string report_table(const ComparisonReport& r);

}  // namespace bmt
