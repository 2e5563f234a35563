#pragma once

// Two-branch multitask network joined by cross-stitch units.
//
// Branch A (classification) reads the tweet embedding, branch B (engagement
// regression) reads the 12 content features. At every hidden level both
// branches run FC -> batch-norm -> relu -> dropout and a cross-stitch unit
// mixes the two activations. Heads: affine -> 2 logits (A), affine -> 2
// standardized log1p counts (B).
//
// The same code also builds the two comparison networks: a single-task
// classifier (branch A + head A only) and an MLP over the concatenated
// embedding and features.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bmt/archive.hpp"
#include "bmt/cross_stitch.hpp"
#include "bmt/encoder.hpp"
#include "bmt/features.hpp"
#include "bmt/layers.hpp"
#include "bmt/optimizer.hpp"
#include "bmt/rng.hpp"

namespace bmt {

enum class Architecture { kMultitask, kSingleTask, kConcatMlp };
std::string_view architecture_name(Architecture a);
std::optional<Architecture> parse_architecture(std::string_view s);

struct ModelConfig {
  Architecture architecture = Architecture::kMultitask;
  int embed_dim = 32;
  std::vector<int> hidden{128, 64};
  StitchInit stitch_init;
  bool freeze_stitches = false;
  double dropout = 0.5;
  bool batch_norm = true;
  double lambda = 0.1;
  AdamConfig adam;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 1;
  bool encoder_frozen = true;
  bool raw_targets = false;

  /// Throws ConfigError.
  void validate() const;
  int branch_a_input() const;
  bool has_regression_branch() const { return architecture == Architecture::kMultitask; }

  /// Sorted "key=value" lines; parse_canonical inverts it exactly.
  std::string canonical_text() const;
  static ModelConfig parse_canonical(std::string_view text);

  bool operator==(const ModelConfig&) const;
};

struct BranchParams {
  std::vector<FcParams<double>> fc;
  std::vector<BatchNormParams<double>> bn;  // empty when batch-norm is off
};

struct ModelParams {
  BranchParams a;
  BranchParams b;  // empty unless multitask
  std::vector<CrossStitchUnit<double>> stitches;
  FcParams<double> head_a;
  FcParams<double> head_b;  // 0x0 unless multitask

  /// Visits (name, tensor, trainable) in checkpoint order.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f);
};

/// Xavier weights, zero biases, stitches per config. Deterministic in the seed;
/// branch A, branch B and each head draw from separate child streams so the
/// single-task network initialises exactly like branch A of the multitask one.
ModelParams build_model(const ModelConfig& config);

struct DropoutStreams {
  Rng a;
  Rng b;
};

struct LevelCache {
  FcCache<double> fc;
  BatchNormCache<double> bn;
  Matrix pre_relu;
  DropoutForward<double> dropout;
  Vector running_mean, running_var;  // post-update statistics (train mode)
};

struct ForwardPass {
  Matrix logits;  // batch x 2
  Matrix reg;     // batch x 2, empty unless multitask
  std::vector<LevelCache> a, b;
  std::vector<StitchCache<double>> stitches;
  FcCache<double> head_a, head_b;
};

/// For the concat MLP, `features` is appended to `embeddings` as branch-A
/// input. `streams` may be null in infer mode.
ForwardPass forward(const ModelParams& params, const ModelConfig& config,
                    const Matrix& embeddings, const Matrix& features, Mode mode,
                    DropoutStreams* streams);

struct ModelGrads {
  ModelParams params;  // same layout; running statistics are left zero
  Matrix d_embeddings;
  Matrix d_features;
};

ModelGrads backward(const ModelParams& params, const ModelConfig& config,
                    const ForwardPass& pass, const Matrix& d_logits, const Matrix& d_reg);

/// Copies the post-forward running statistics into `params`.
void commit_running_stats(ModelParams& params, const ForwardPass& pass);

struct JointLoss {
  double total = 0.0;
  double ce = 0.0;
  double mse = 0.0;
  Matrix d_logits;
  Matrix d_reg;
};

/// total = CE(logits, labels) + lambda * MSE(reg, targets). With an empty
/// `reg` the MSE term is absent.
JointLoss joint_loss(const Matrix& logits, std::span<const int> labels, const Matrix& reg,
                     const Matrix& targets, double lambda);

/// Standardised log1p engagement targets (or raw counts when `raw`).
struct TargetTransform {
  bool raw = false;
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> std{1.0, 1.0};

  static TargetTransform fit(const Matrix& counts, bool raw);
  Matrix apply(const Matrix& counts) const;
  /// expm1(de-standardised value), clamped at 0.
  Matrix invert(const Matrix& reg) const;
};

/// Per-column standardisation of the content features, fitted on the
/// training data. Identity for the single-task network.
struct FeatureScaler {
  std::array<double, kNumFeatures> mean{};
  std::array<double, kNumFeatures> std;

  FeatureScaler() { std.fill(1.0); }
  static FeatureScaler fit(const Matrix& features);
  Matrix apply(const Matrix& features) const;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelCheckpoint {
  std::uint32_t version = kModelFormatVersion;
  ModelConfig config;
  TargetTransform transform;
  FeatureScaler scaler;
  ModelParams params;
  std::optional<EncoderParams> encoder;  // present only when fine-tuned

  TensorArchive to_archive() const;
  static ModelCheckpoint from_archive(const TensorArchive& archive);
};

void save_checkpoint(const std::string& path, const ModelCheckpoint& cp);
ModelCheckpoint load_checkpoint(const std::string& path);

struct TrainData {
  Matrix embeddings;        // n x D
  Matrix features;          // n x 12
  std::vector<int> labels;  // n, Label indices
  Matrix counts;            // n x 2: retweets, likes after five days
};

/// Everything needed to back-propagate into the encoder when it is not frozen.
struct FineTuneInputs {
  EncoderParams encoder;
  std::vector<std::vector<int>> sequences;  // char-encoded texts, aligned with TrainData
};

struct EpochStats {
  double total = 0.0;
  double ce = 0.0;
  double mse = 0.0;
  double train_f1 = 0.0;  // macro F1 on the training data, infer mode

  bool operator==(const EpochStats&) const = default;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochStats> history;
};

/// Mini-batch Adam for a fixed number of epochs. A trailing batch of one
/// example is skipped when batch-norm is on. Throws TrainingError when the
/// data holds a single class.
TrainResult train(const TrainData& data, const ModelConfig& config,
                  const FineTuneInputs* fine_tune = nullptr);

struct Prediction {
  std::vector<int> labels;
  Matrix probabilities;  // n x 2
  Matrix engagement;     // n x 2 counts, empty unless multitask
};

/// Infer-mode prediction. When `expected` is given, its architecture fields
/// must match the checkpoint's (ConfigMismatchError otherwise).
Prediction predict(const ModelCheckpoint& cp, const Matrix& embeddings, const Matrix& features,
                   const ModelConfig* expected = nullptr);

// ---------------------------------------------------------------------------

template <typename Self, typename F>
void ModelParams::visit(Self& self, F&& f) {
  auto branch = [&](auto& br, const std::string& prefix) {
    for (std::size_t l = 0; l < br.fc.size(); ++l) {
      const std::string fc = prefix + ".fc" + std::to_string(l);
      f(fc + ".W", br.fc[l].W, true);
      // A bias feeding batch-norm is cancelled by the mean subtraction; it
      // stays at zero and beta provides the shift.
      f(fc + ".b", br.fc[l].b, l >= br.bn.size());
      if (l < br.bn.size()) {
        const std::string bn = prefix + ".bn" + std::to_string(l);
        f(bn + ".gamma", br.bn[l].gamma, true);
        f(bn + ".beta", br.bn[l].beta, true);
        f(bn + ".running_mean", br.bn[l].running_mean, false);
        f(bn + ".running_var", br.bn[l].running_var, false);
      }
    }
  };
  branch(self.a, "a");
  branch(self.b, "b");
  for (std::size_t s = 0; s < self.stitches.size(); ++s)
    f("stitch" + std::to_string(s) + ".alpha", self.stitches[s].alpha, true);
  f(std::string("head_a.W"), self.head_a.W, true);
  f(std::string("head_a.b"), self.head_a.b, true);
  if (self.head_b.W.size() > 0) {
    f(std::string("head_b.W"), self.head_b.W, true);
    f(std::string("head_b.b"), self.head_b.b, true);
  }
}

}  // namespace bmt
