#include "bmt/metrics.hpp"

#include <stdexcept>
#include <string>

namespace bmt {

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_score(double p, double r) { return safe_ratio(2.0 * p * r, p + r); }

MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("compute_metrics: " + std::to_string(predictions.size()) +
                                " predictions vs " + std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw std::invalid_argument("compute_metrics: no records");
  MetricsReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predictions[i];
    if (y < 0 || y > 1 || p < 0 || p > 1)
      throw std::invalid_argument("compute_metrics: class index outside {0, 1}");
    ++r.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)];
  }
  r.total = labels.size();
  const auto total = static_cast<double>(r.total);
  double correct = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto tp = static_cast<double>(r.confusion[c][c]);
    const auto fp = static_cast<double>(r.confusion[1 - c][c]);
    const auto fn = static_cast<double>(r.confusion[c][1 - c]);
    auto& m = r.per_class[c];
    m.precision = safe_ratio(tp, tp + fp);
    m.recall = safe_ratio(tp, tp + fn);
    m.f1 = f1_score(m.precision, m.recall);
    m.support = r.confusion[c][0] + r.confusion[c][1];
    correct += tp;
  }
  r.accuracy = correct / total;
  r.macro.support = r.weighted.support = r.micro.support = r.total;
  for (const auto& m : r.per_class) {
    const double w = static_cast<double>(m.support) / total;
    r.macro.precision += 0.5 * m.precision;
    r.macro.recall += 0.5 * m.recall;
    r.macro.f1 += 0.5 * m.f1;
    r.weighted.precision += w * m.precision;
    r.weighted.recall += w * m.recall;
    r.weighted.f1 += w * m.f1;
  }
  // Single-label: micro precision = recall = F1 = accuracy.
  r.micro.precision = r.micro.recall = r.micro.f1 = r.accuracy;
  return r;
}

}  // namespace bmt
