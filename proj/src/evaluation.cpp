#include "bmt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

namespace bmt {

using Json = nlohmann::ordered_json;

FoldSplit kfold_split(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: k must be >= 2");
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw DataError("kfold_split: record " + std::to_string(i) + " has no usable label");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (std::size_t c = 0; c < 2; ++c)
    if (by_class[c].size() < k)
      throw DataError("kfold_split: class " + std::string(label_name(static_cast<Label>(c))) +
                      " has " + std::to_string(by_class[c].size()) + " records, fewer than k=" +
                      std::to_string(k));
  FoldSplit split;
  split.k = k;
  split.seed = seed;
  split.folds.resize(k);
  const Rng root = Rng(seed).split("kfold");
  // Round-robin dealing continues across classes so fold sizes differ by at
  // most one overall and per class.
  std::size_t next = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    Rng rng = root.split(c);
    rng.shuffle(std::span(by_class[c]));
    for (std::size_t idx : by_class[c]) {
      split.folds[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  for (auto& f : split.folds) std::sort(f.begin(), f.end());
  return split;
}

std::vector<std::size_t> training_indices(const FoldSplit& split, std::size_t f) {
  std::vector<std::size_t> out;
  for (std::size_t g = 0; g < split.folds.size(); ++g)
    if (g != f) out.insert(out.end(), split.folds[g].begin(), split.folds[g].end());
  std::sort(out.begin(), out.end());
  return out;
}

std::map<Category, double> fn_breakdown(std::span<const int> predictions,
                                        std::span<const int> labels,
                                        std::span<const std::optional<Category>> categories) {
  if (predictions.size() != labels.size() || categories.size() != labels.size())
    throw std::invalid_argument("fn_breakdown: length mismatch");
  std::map<Category, std::size_t> counts;
  std::size_t total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1 || predictions[i] != 0 || !categories[i]) continue;
    ++counts[*categories[i]];
    ++total;
  }
  std::map<Category, double> out;
  for (const auto& [c, n] : counts)
    out[c] = 100.0 * static_cast<double>(n) / static_cast<double>(total);
  return out;
}

// ---------------------------------------------------------------------------

TensorArchive encoder_to_archive(const EncoderBundle& e) {
  TensorArchive a;
  const auto c = e.params.config();
  a.config_text = "char_dim=" + std::to_string(c.char_dim) + "\nembed_dim=" +
                  std::to_string(c.embed_dim) + "\nhidden=" + std::to_string(c.hidden) +
                  "\nkind=encoder\n";
  EncoderParams::visit(e.params, [&](const std::string& name, const auto& t) {
    a.tensors.push_back({name, Matrix(t)});
  });
  const auto& chars = e.chars.chars();
  Matrix cps(1, static_cast<Eigen::Index>(chars.size() - 2));
  for (std::size_t i = 2; i < chars.size(); ++i)
    cps(0, static_cast<Eigen::Index>(i - 2)) = static_cast<double>(chars[i]);
  a.tensors.push_back({"vocab.codepoints", cps});
  return a;
}

EncoderBundle encoder_from_archive(const TensorArchive& a) {
  EncoderConfig c;
  bool is_encoder = false;
  for (const auto& [k, v] : parse_key_values(a.config_text)) {
    if (k == "kind") is_encoder = v == "encoder";
    else if (k == "char_dim") c.char_dim = std::stoi(v);
    else if (k == "embed_dim") c.embed_dim = std::stoi(v);
    else if (k == "hidden") c.hidden = std::stoi(v);
  }
  if (!is_encoder) throw ConfigMismatchError("archive is not an encoder checkpoint");
  const Matrix* cps = a.find("vocab.codepoints");
  if (!cps) throw CheckpointError("encoder checkpoint is missing its character vocabulary");
  std::vector<char32_t> chars;
  for (Eigen::Index i = 0; i < cps->size(); ++i) {
    const double v = (*cps)(i);
    if (!(v >= 0.0 && v <= 0x10FFFF) || v != std::floor(v))
      throw CheckpointError("encoder vocabulary holds an invalid code point");
    chars.push_back(static_cast<char32_t>(v));
  }
  EncoderBundle e;
  e.chars = CharVocab::from_chars(chars);
  e.params = EncoderParams::zeros(e.chars.size(), c);
  EncoderParams::visit(e.params, [&](const std::string& name, auto& t) {
    const Matrix* src = a.find(name);
    const Eigen::Index rows = t.rows(), cols = t.cols();
    if (!src) throw CheckpointError("encoder checkpoint is missing tensor '" + name + "'");
    if (src->rows() * src->cols() != rows * cols ||
        (cols != 1 && (src->rows() != rows || src->cols() != cols)))
      throw ConfigMismatchError("encoder tensor '" + name + "' is " + shape_string(*src) +
                                ", config implies " + std::to_string(rows) + "x" +
                                std::to_string(cols));
    for (Eigen::Index i = 0; i < src->size(); ++i) t.data()[i] = src->data()[i];
  });
  return e;
}

Featurized featurize(const Dataset& d, const EncoderBundle& encoder,
                     const SentimentLexicon& sentiment, const PosLexicon& pos) {
  const auto n = static_cast<Eigen::Index>(d.records.size());
  Featurized f;
  f.embeddings.resize(n, encoder.params.W_f.rows());
  f.features.resize(n, static_cast<Eigen::Index>(kNumFeatures));
  f.counts.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = d.records[static_cast<std::size_t>(i)];
    f.sequences.push_back(char_encode(r.text, encoder.chars));
    f.embeddings.row(i) = encode_tweet(f.sequences.back(), encoder.params).transpose();
    const FeatureVector fv = extract_features(r, sentiment, pos);
    for (std::size_t j = 0; j < kNumFeatures; ++j) f.features(i, static_cast<Eigen::Index>(j)) = fv[j];
    f.labels.push_back(r.label ? static_cast<int>(*r.label) : -1);
    f.counts(i, 0) = static_cast<double>(r.retweets_5d);
    f.counts(i, 1) = static_cast<double>(r.likes_5d);
    f.categories.push_back(r.category);
  }
  return f;
}

namespace {

Matrix rows_of(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

TrainData select(const Featurized& f, std::span<const std::size_t> rows) {
  TrainData t;
  t.embeddings = rows_of(f.embeddings, rows);
  t.features = rows_of(f.features, rows);
  t.counts = rows_of(f.counts, rows);
  for (auto r : rows) {
    if (f.labels[r] < 0) throw DataError("record " + std::to_string(r) + " is unlabeled");
    t.labels.push_back(f.labels[r]);
  }
  return t;
}

// ---------------------------------------------------------------------------

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  if (values.empty()) return m;
  const auto n = static_cast<double>(values.size());
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / (n - 1.0));
  }
  return m;
}

namespace {

template <typename Get>
MeanStd across(const std::vector<MetricsReport>& folds, Get get) {
  std::vector<double> v;
  for (const auto& f : folds) v.push_back(get(f));
  return mean_std(v);
}

}  // namespace

MeanStd ComparisonRow::macro_precision() const {
  return across(folds, [](const MetricsReport& m) { return m.macro.precision; });
}
MeanStd ComparisonRow::macro_recall() const {
  return across(folds, [](const MetricsReport& m) { return m.macro.recall; });
}
MeanStd ComparisonRow::macro_f1() const {
  return across(folds, [](const MetricsReport& m) { return m.macro.f1; });
}
MeanStd ComparisonRow::weighted_f1() const {
  return across(folds, [](const MetricsReport& m) { return m.weighted.f1; });
}
MeanStd ComparisonRow::micro_f1() const {
  return across(folds, [](const MetricsReport& m) { return m.micro.f1; });
}

std::vector<std::pair<std::string, ModelConfig>> comparison_configs(const ModelConfig& base) {
  ModelConfig mt = base;
  mt.architecture = Architecture::kMultitask;
  ModelConfig st = base;
  st.architecture = Architecture::kSingleTask;
  st.lambda = 0.0;
  ModelConfig cm = base;
  cm.architecture = Architecture::kConcatMlp;
  cm.lambda = 0.0;
  return {{kRowMultitask, mt}, {kRowSingleTask, st}, {kRowConcatMlp, cm}};
}

ComparisonReport run_comparison(const Featurized& data,
                                const std::vector<std::pair<std::string, ModelConfig>>& configs,
                                std::size_t k, std::uint64_t seed) {
  const FoldSplit split = kfold_split(data.labels, k, seed);
  ComparisonReport report;
  report.seed = seed;
  report.k = k;
  const Rng fold_seeds = Rng(seed).split("fold_model_seed");
  for (const auto& [name, base] : configs) {
    ComparisonRow row;
    row.name = name;
    row.config = base;
    std::vector<int> all_pred, all_true;
    std::vector<std::optional<Category>> all_cat;
    for (std::size_t f = 0; f < k; ++f) {
      ModelConfig cfg = base;
      Rng fs = fold_seeds.split(f);
      cfg.seed = fs.next_u64();
      const auto train_rows = training_indices(split, f);
      const TrainData train_data = select(data, train_rows);
      const TrainResult trained = train(train_data, cfg);
      const TrainData test = select(data, split.folds[f]);
      const Prediction pred = predict(trained.checkpoint, test.embeddings, test.features);
      row.folds.push_back(compute_metrics(pred.labels, test.labels));
      for (std::size_t i = 0; i < split.folds[f].size(); ++i) {
        all_pred.push_back(pred.labels[i]);
        all_true.push_back(test.labels[i]);
        all_cat.push_back(data.categories[split.folds[f][i]]);
      }
    }
    row.pooled = compute_metrics(all_pred, all_true);
    row.fn_breakdown = fn_breakdown(all_pred, all_true, all_cat);
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

Json class_json(const ClassMetrics& m) {
  Json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["support"] = m.support;
  return j;
}

Json metrics_json(const MetricsReport& m) {
  Json j;
  j["total"] = m.total;
  j["accuracy"] = m.accuracy;
  j["confusion"] = {{m.confusion[0][0], m.confusion[0][1]}, {m.confusion[1][0], m.confusion[1][1]}};
  j["genuine"] = class_json(m.per_class[0]);
  j["blackmarket"] = class_json(m.per_class[1]);
  j["macro"] = class_json(m.macro);
  j["weighted"] = class_json(m.weighted);
  j["micro"] = class_json(m.micro);
  return j;
}

Json mean_std_json(const MeanStd& m) {
  Json j;
  j["mean"] = m.mean;
  j["std"] = m.std;
  return j;
}

std::string pm(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f +/- %.4f", m.mean, m.std);
  return buf;
}

}  // namespace

std::string report_json(const ComparisonReport& r) {
  Json j;
  j["seed"] = r.seed;
  j["k"] = r.k;
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    Json jr;
    jr["name"] = row.name;
    jr["architecture"] = std::string(architecture_name(row.config.architecture));
    jr["lambda"] = row.config.lambda;
    Json summary;
    summary["macro_precision"] = mean_std_json(row.macro_precision());
    summary["macro_recall"] = mean_std_json(row.macro_recall());
    summary["macro_f1"] = mean_std_json(row.macro_f1());
    summary["weighted_f1"] = mean_std_json(row.weighted_f1());
    summary["micro_f1"] = mean_std_json(row.micro_f1());
    jr["summary"] = summary;
    Json folds = Json::array();
    for (const auto& f : row.folds) folds.push_back(metrics_json(f));
    jr["folds"] = folds;
    jr["pooled"] = metrics_json(row.pooled);
    Json fn = Json::object();
    for (const auto& [c, pct] : row.fn_breakdown) fn[std::string(category_name(c))] = pct;
    jr["fn_breakdown"] = fn;
    rows.push_back(jr);
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

std::string report_table(const ComparisonReport& r) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-20s %-18s %-18s %-18s %-18s\n", "model", "macro P",
                "macro R", "macro F1", "weighted F1");
  out += line;
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%-20s %-18s %-18s %-18s %-18s\n", row.name.c_str(),
                  pm(row.macro_precision()).c_str(), pm(row.macro_recall()).c_str(),
                  pm(row.macro_f1()).c_str(), pm(row.weighted_f1()).c_str());
    out += line;
  }
  for (const auto& row : r.rows) {
    if (row.fn_breakdown.empty()) continue;
    out += row.name + " false negatives by category:";
    for (const auto& [c, pct] : row.fn_breakdown) {
      std::snprintf(line, sizeof line, " %s %.2f%%", std::string(category_name(c)).c_str(), pct);
      out += line;
    }
    out += "\n";
  }
  return out;
}

}  // namespace bmt
