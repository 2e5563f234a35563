#pragma once

// Binary classification metrics. Class indices follow Label: 0 genuine,
// 1 blackmarket. Any 0/0 ratio is reported as 0.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace bmt {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // true instances of the class
};

struct MetricsReport {
  // confusion[true][predicted]
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::array<ClassMetrics, 2> per_class{};
  ClassMetrics macro;
  ClassMetrics weighted;
  ClassMetrics micro;
  double accuracy = 0.0;
  std::size_t total = 0;
};

/// Throws std::invalid_argument on length mismatch, empty input or a label
/// outside {0, 1}.
MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels);

double safe_ratio(double num, double den);
double f1_score(double precision, double recall);

}  // namespace bmt
