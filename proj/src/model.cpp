#include "bmt/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>

#include "bmt/metrics.hpp"

namespace bmt {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double d = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config key '" + key + "': bad number '" + v + "'");
  return d;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t n = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
  return n;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

int to_int(const std::string& key, std::uint64_t v) {
  if (v > 1u << 30) throw ConfigError("config key '" + key + "': value too large");
  return static_cast<int>(v);
}

}  // namespace

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::kMultitask: return "multitask";
    case Architecture::kSingleTask: return "single_task";
    case Architecture::kConcatMlp: return "concat_mlp";
  }
  return "multitask";
}

std::optional<Architecture> parse_architecture(std::string_view s) {
  for (auto a : {Architecture::kMultitask, Architecture::kSingleTask, Architecture::kConcatMlp})
    if (architecture_name(a) == s) return a;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  for (int w : hidden)
    if (w < 1) throw ConfigError("hidden widths must be >= 1");
  check_dropout_rate(dropout);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (batch_norm && batch_size < 2) throw ConfigError("batch_size must be >= 2 with batch-norm");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(adam.step_size > 0.0)) throw ConfigError("adam step size must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("adam moment decays must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (!std::isfinite(stitch_init.self_weight) || !std::isfinite(stitch_init.cross_weight))
    throw ConfigError("stitch init weights must be finite");
}

int ModelConfig::branch_a_input() const {
  return architecture == Architecture::kConcatMlp ? embed_dim + static_cast<int>(kNumFeatures)
                                                  : embed_dim;
}

std::string ModelConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["architecture"] = std::string(architecture_name(architecture));
  kv["embed_dim"] = std::to_string(embed_dim);
  std::string widths;
  for (std::size_t i = 0; i < hidden.size(); ++i)
    widths += (i ? "," : "") + std::to_string(hidden[i]);
  kv["hidden"] = widths;
  kv["stitch.mode"] = stitch_init.mode == StitchInitMode::kIdentity ? "identity" : "biased";
  kv["stitch.self"] = fmt(stitch_init.self_weight);
  kv["stitch.cross"] = fmt(stitch_init.cross_weight);
  kv["freeze_stitches"] = freeze_stitches ? "true" : "false";
  kv["dropout"] = fmt(dropout);
  kv["batch_norm"] = batch_norm ? "true" : "false";
  kv["lambda"] = fmt(lambda);
  kv["adam.step_size"] = fmt(adam.step_size);
  kv["adam.beta1"] = fmt(adam.beta1);
  kv["adam.beta2"] = fmt(adam.beta2);
  kv["adam.epsilon"] = fmt(adam.epsilon);
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["seed"] = std::to_string(seed);
  kv["encoder_frozen"] = encoder_frozen ? "true" : "false";
  kv["raw_targets"] = raw_targets ? "true" : "false";
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

ModelConfig ModelConfig::parse_canonical(std::string_view text) {
  ModelConfig c;
  for (const auto& [k, v] : parse_key_values(text)) {
    if (k == "architecture") {
      auto a = parse_architecture(v);
      if (!a) throw ConfigError("unknown architecture '" + v + "'");
      c.architecture = *a;
    } else if (k == "embed_dim") {
      c.embed_dim = to_int(k, parse_uint(k, v));
    } else if (k == "hidden") {
      c.hidden.clear();
      std::size_t start = 0;
      while (start <= v.size()) {
        auto comma = v.find(',', start);
        if (comma == std::string::npos) comma = v.size();
        c.hidden.push_back(to_int(k, parse_uint(k, v.substr(start, comma - start))));
        start = comma + 1;
      }
    } else if (k == "stitch.mode") {
      if (v == "identity") c.stitch_init.mode = StitchInitMode::kIdentity;
      else if (v == "biased") c.stitch_init.mode = StitchInitMode::kBiased;
      else throw ConfigError("unknown stitch mode '" + v + "'");
    } else if (k == "stitch.self") {
      c.stitch_init.self_weight = parse_double(k, v);
    } else if (k == "stitch.cross") {
      c.stitch_init.cross_weight = parse_double(k, v);
    } else if (k == "freeze_stitches") {
      c.freeze_stitches = parse_bool(k, v);
    } else if (k == "dropout") {
      c.dropout = parse_double(k, v);
    } else if (k == "batch_norm") {
      c.batch_norm = parse_bool(k, v);
    } else if (k == "lambda") {
      c.lambda = parse_double(k, v);
    } else if (k == "adam.step_size") {
      c.adam.step_size = parse_double(k, v);
    } else if (k == "adam.beta1") {
      c.adam.beta1 = parse_double(k, v);
    } else if (k == "adam.beta2") {
      c.adam.beta2 = parse_double(k, v);
    } else if (k == "adam.epsilon") {
      c.adam.epsilon = parse_double(k, v);
    } else if (k == "epochs") {
      c.epochs = to_int(k, parse_uint(k, v));
    } else if (k == "batch_size") {
      c.batch_size = to_int(k, parse_uint(k, v));
    } else if (k == "seed") {
      c.seed = parse_uint(k, v);
    } else if (k == "encoder_frozen") {
      c.encoder_frozen = parse_bool(k, v);
    } else if (k == "raw_targets") {
      c.raw_targets = parse_bool(k, v);
    } else {
      throw ConfigError("unknown model config key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

bool ModelConfig::operator==(const ModelConfig& o) const {
  return canonical_text() == o.canonical_text();
}

// ---------------------------------------------------------------------------
// Construction

namespace {

BranchParams branch_skeleton(int input, const std::vector<int>& widths, bool batch_norm) {
  BranchParams br;
  int in = input;
  for (int w : widths) {
    br.fc.push_back({Matrix::Zero(w, in), Vector::Zero(w)});
    if (batch_norm) br.bn.push_back(BatchNormParams<double>::identity(w));
    in = w;
  }
  return br;
}

ModelParams model_skeleton(const ModelConfig& c) {
  ModelParams p;
  p.a = branch_skeleton(c.branch_a_input(), c.hidden, c.batch_norm);
  const int last = c.hidden.back();
  p.head_a = {Matrix::Zero(2, last), Vector::Zero(2)};
  if (c.has_regression_branch()) {
    p.b = branch_skeleton(static_cast<int>(kNumFeatures), c.hidden, c.batch_norm);
    p.stitches.assign(c.hidden.size(), init_stitch<double>(c.stitch_init));
    p.head_b = {Matrix::Zero(2, last), Vector::Zero(2)};
  }
  return p;
}

void xavier_branch(BranchParams& br, Rng rng) {
  for (auto& fc : br.fc) fc.W = xavier_init(fc.W.rows(), fc.W.cols(), rng);
}

}  // namespace

ModelParams build_model(const ModelConfig& config) {
  config.validate();
  ModelParams p = model_skeleton(config);
  const Rng root(config.seed);
  xavier_branch(p.a, root.split("init_a"));
  {
    Rng r = root.split("init_head_a");
    p.head_a.W = xavier_init(p.head_a.W.rows(), p.head_a.W.cols(), r);
  }
  if (config.has_regression_branch()) {
    xavier_branch(p.b, root.split("init_b"));
    Rng r = root.split("init_head_b");
    p.head_b.W = xavier_init(p.head_b.W.rows(), p.head_b.W.cols(), r);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

Matrix level_forward(const BranchParams& br, std::size_t l, const ModelConfig& c,
                     const Matrix& x, Mode mode, Rng& rng, LevelCache& cache) {
  auto fc = fc_forward(x, br.fc[l]);
  cache.fc = std::move(fc.cache);
  Matrix h = std::move(fc.y);
  if (c.batch_norm) {
    auto bn = batchnorm_forward(h, br.bn[l], mode);
    cache.bn = std::move(bn.cache);
    cache.running_mean = std::move(bn.running_mean);
    cache.running_var = std::move(bn.running_var);
    h = std::move(bn.y);
  }
  cache.pre_relu = h;
  h = elementwise(UnaryOp::kRelu, h);
  cache.dropout = dropout_forward(h, c.dropout, mode, rng);
  return cache.dropout.y;
}

Matrix level_backward(const BranchParams& br, BranchParams& grads, std::size_t l,
                      const ModelConfig& c, const LevelCache& cache, const Matrix& g_out) {
  Matrix g = dropout_backward(g_out, cache.dropout);
  g = relu_backward(g, cache.pre_relu);
  if (c.batch_norm) {
    auto bg = batchnorm_backward(g, cache.bn, br.bn[l]);
    grads.bn[l].gamma = std::move(bg.dgamma);
    grads.bn[l].beta = std::move(bg.dbeta);
    g = std::move(bg.dx);
  }
  auto fg = fc_backward(g, cache.fc, br.fc[l]);
  grads.fc[l].W = std::move(fg.dW);
  grads.fc[l].b = std::move(fg.db);
  return std::move(fg.dx);
}

}  // namespace

ForwardPass forward(const ModelParams& params, const ModelConfig& config,
                    const Matrix& embeddings, const Matrix& features, Mode mode,
                    DropoutStreams* streams) {
  if (embeddings.cols() != config.embed_dim)
    throw ShapeError("forward: embeddings " + shape_string(embeddings) + " but model expects " +
                     std::to_string(config.embed_dim) + " columns");
  const bool needs_features = config.architecture != Architecture::kSingleTask;
  if (needs_features && (features.cols() != static_cast<Eigen::Index>(kNumFeatures) ||
                         features.rows() != embeddings.rows()))
    throw ShapeError("forward: features " + shape_string(features) + " do not match " +
                     std::to_string(embeddings.rows()) + "x" + std::to_string(kNumFeatures));
  if (mode == Mode::kTrain && config.dropout > 0.0 && streams == nullptr)
    throw std::invalid_argument("forward: train mode with dropout needs RNG streams");

  DropoutStreams unused{Rng(0), Rng(0)};
  DropoutStreams& rng = streams ? *streams : unused;

  ForwardPass pass;
  Matrix xa;
  if (config.architecture == Architecture::kConcatMlp) {
    xa.resize(embeddings.rows(), embeddings.cols() + features.cols());
    xa << embeddings, features;
  } else {
    xa = embeddings;
  }
  Matrix xb;
  if (config.has_regression_branch()) xb = features;

  const std::size_t levels = params.a.fc.size();
  pass.a.resize(levels);
  if (config.has_regression_branch()) {
    pass.b.resize(levels);
    pass.stitches.resize(levels);
  }
  for (std::size_t l = 0; l < levels; ++l) {
    xa = level_forward(params.a, l, config, xa, mode, rng.a, pass.a[l]);
    if (config.has_regression_branch()) {
      xb = level_forward(params.b, l, config, xb, mode, rng.b, pass.b[l]);
      auto st = stitch_forward(xa, xb, params.stitches[l]);
      pass.stitches[l] = std::move(st.cache);
      xa = std::move(st.y_a);
      xb = std::move(st.y_b);
    }
  }
  auto ha = fc_forward(xa, params.head_a);
  pass.logits = std::move(ha.y);
  pass.head_a = std::move(ha.cache);
  if (config.has_regression_branch()) {
    auto hb = fc_forward(xb, params.head_b);
    pass.reg = std::move(hb.y);
    pass.head_b = std::move(hb.cache);
  }
  return pass;
}

ModelGrads backward(const ModelParams& params, const ModelConfig& config,
                    const ForwardPass& pass, const Matrix& d_logits, const Matrix& d_reg) {
  ModelGrads out;
  out.params = params;
  ModelParams::visit(out.params, [](const std::string&, auto& t, bool) { t.setZero(); });

  auto ga_head = fc_backward(d_logits, pass.head_a, params.head_a);
  out.params.head_a.W = std::move(ga_head.dW);
  out.params.head_a.b = std::move(ga_head.db);
  Matrix ga = std::move(ga_head.dx);
  Matrix gb;
  if (config.has_regression_branch()) {
    auto gb_head = fc_backward(d_reg, pass.head_b, params.head_b);
    out.params.head_b.W = std::move(gb_head.dW);
    out.params.head_b.b = std::move(gb_head.db);
    gb = std::move(gb_head.dx);
  }
  for (std::size_t l = pass.a.size(); l-- > 0;) {
    if (config.has_regression_branch()) {
      auto sg = stitch_backward(ga, gb, pass.stitches[l], params.stitches[l]);
      out.params.stitches[l].alpha = std::move(sg.dalpha);
      ga = std::move(sg.dx_a);
      gb = std::move(sg.dx_b);
      gb = level_backward(params.b, out.params.b, l, config, pass.b[l], gb);
    }
    ga = level_backward(params.a, out.params.a, l, config, pass.a[l], ga);
  }
  if (config.architecture == Architecture::kConcatMlp) {
    out.d_embeddings = ga.leftCols(config.embed_dim);
    out.d_features = ga.rightCols(static_cast<Eigen::Index>(kNumFeatures));
  } else {
    out.d_embeddings = std::move(ga);
    if (config.has_regression_branch()) out.d_features = std::move(gb);
  }
  return out;
}

void commit_running_stats(ModelParams& params, const ForwardPass& pass) {
  auto commit = [](BranchParams& br, const std::vector<LevelCache>& caches) {
    for (std::size_t l = 0; l < br.bn.size() && l < caches.size(); ++l) {
      br.bn[l].running_mean = caches[l].running_mean;
      br.bn[l].running_var = caches[l].running_var;
    }
  };
  commit(params.a, pass.a);
  commit(params.b, pass.b);
}

JointLoss joint_loss(const Matrix& logits, std::span<const int> labels, const Matrix& reg,
                     const Matrix& targets, double lambda) {
  JointLoss j;
  auto ce = softmax_cross_entropy<double>(logits, labels);
  j.ce = ce.loss;
  j.d_logits = std::move(ce.grad);
  j.total = j.ce;
  if (reg.size() > 0) {
    auto mse = mse_loss<double>(reg, targets);
    j.mse = mse.loss;
    j.total = j.ce + lambda * j.mse;
    j.d_reg = lambda * mse.grad;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Targets

TargetTransform TargetTransform::fit(const Matrix& counts, bool raw) {
  TargetTransform t;
  t.raw = raw;
  if (raw || counts.rows() == 0) return t;
  const auto n = static_cast<double>(counts.rows());
  for (Eigen::Index j = 0; j < 2; ++j) {
    const Vector v = counts.col(j).array().log1p();
    const double mean = v.sum() / n;
    const double var = (v.array() - mean).square().sum() / n;
    t.mean[static_cast<std::size_t>(j)] = mean;
    t.std[static_cast<std::size_t>(j)] = std::max(std::sqrt(var), 1e-6);
  }
  return t;
}

Matrix TargetTransform::apply(const Matrix& counts) const {
  if (raw) return counts;
  Matrix out(counts.rows(), 2);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const auto k = static_cast<std::size_t>(j);
    out.col(j) = (counts.col(j).array().log1p() - mean[k]) / std[k];
  }
  return out;
}

Matrix TargetTransform::invert(const Matrix& reg) const {
  if (raw) return reg.cwiseMax(0.0);
  Matrix out(reg.rows(), 2);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const auto k = static_cast<std::size_t>(j);
    out.col(j) = (reg.col(j).array() * std[k] + mean[k]).unaryExpr([](double v) {
      return std::max(std::expm1(v), 0.0);
    });
  }
  return out;
}

FeatureScaler FeatureScaler::fit(const Matrix& features) {
  FeatureScaler s;
  if (features.rows() == 0 || features.cols() != static_cast<Eigen::Index>(kNumFeatures)) return s;
  const auto n = static_cast<double>(features.rows());
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    const auto col = features.col(static_cast<Eigen::Index>(j));
    const double mean = col.sum() / n;
    const double var = (col.array() - mean).square().sum() / n;
    s.mean[j] = mean;
    s.std[j] = std::max(std::sqrt(var), 1e-6);
  }
  return s;
}

Matrix FeatureScaler::apply(const Matrix& features) const {
  if (features.cols() != static_cast<Eigen::Index>(kNumFeatures)) return features;
  Matrix out(features.rows(), features.cols());
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    out.col(c) = (features.col(c).array() - mean[j]) / std[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

TensorArchive ModelCheckpoint::to_archive() const {
  TensorArchive a;
  a.version = version;
  auto kv = parse_key_values(config.canonical_text());
  kv.emplace_back("kind", "model");
  std::sort(kv.begin(), kv.end());
  for (const auto& [k, v] : kv) a.config_text += k + "=" + v + "\n";
  ModelParams::visit(params, [&](const std::string& name, const auto& t, bool) {
    a.tensors.push_back({name, Matrix(t)});
  });
  Matrix mean(1, 2), stdev(1, 2);
  mean << transform.mean[0], transform.mean[1];
  stdev << transform.std[0], transform.std[1];
  a.tensors.push_back({"target.mean", mean});
  a.tensors.push_back({"target.std", stdev});
  Matrix fmean(1, static_cast<Eigen::Index>(kNumFeatures));
  Matrix fstd(1, static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    fmean(0, static_cast<Eigen::Index>(j)) = scaler.mean[j];
    fstd(0, static_cast<Eigen::Index>(j)) = scaler.std[j];
  }
  a.tensors.push_back({"features.mean", fmean});
  a.tensors.push_back({"features.std", fstd});
  if (encoder)
    EncoderParams::visit(*encoder, [&](const std::string& name, const auto& t) {
      a.tensors.push_back({name, Matrix(t)});
    });
  return a;
}

namespace {

template <typename T>
void fill_tensor(T& dst, const TensorArchive& a, const std::string& name) {
  const Matrix* src = a.find(name);
  if (!src) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
  const bool vector_like = T::ColsAtCompileTime == 1;
  const Eigen::Index rows = vector_like ? dst.size() : dst.rows();
  const Eigen::Index cols = vector_like ? 1 : dst.cols();
  if (src->rows() != rows || src->cols() != cols)
    throw ConfigMismatchError("tensor '" + name + "' is " + shape_string(*src) + ", config implies " +
                              std::to_string(rows) + "x" + std::to_string(cols));
  for (Eigen::Index i = 0; i < src->size(); ++i) dst.data()[i] = src->data()[i];
}

}  // namespace

ModelCheckpoint ModelCheckpoint::from_archive(const TensorArchive& a) {
  ModelCheckpoint cp;
  cp.version = a.version;
  std::string config_text;
  bool is_model = false;
  for (const auto& [k, v] : parse_key_values(a.config_text)) {
    if (k == "kind") {
      is_model = v == "model";
      continue;
    }
    config_text += k + "=" + v + "\n";
  }
  if (!is_model) throw ConfigMismatchError("archive is not a model checkpoint");
  cp.config = ModelConfig::parse_canonical(config_text);
  cp.params = model_skeleton(cp.config);
  ModelParams::visit(cp.params,
                     [&](const std::string& name, auto& t, bool) { fill_tensor(t, a, name); });
  const Matrix* mean = a.find("target.mean");
  const Matrix* stdev = a.find("target.std");
  if (!mean || !stdev || mean->size() != 2 || stdev->size() != 2)
    throw CheckpointError("checkpoint is missing the target transform");
  cp.transform.raw = cp.config.raw_targets;
  cp.transform.mean = {(*mean)(0), (*mean)(1)};
  cp.transform.std = {(*stdev)(0), (*stdev)(1)};
  const Matrix* fmean = a.find("features.mean");
  const Matrix* fstd = a.find("features.std");
  if (!fmean || !fstd || fmean->size() != static_cast<Eigen::Index>(kNumFeatures) ||
      fstd->size() != static_cast<Eigen::Index>(kNumFeatures))
    throw CheckpointError("checkpoint is missing the feature scaler");
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    cp.scaler.mean[j] = (*fmean)(static_cast<Eigen::Index>(j));
    cp.scaler.std[j] = (*fstd)(static_cast<Eigen::Index>(j));
  }
  if (const Matrix* emb = a.find("enc.embedding")) {
    const Matrix* wf = a.find("enc.W_f");
    const Matrix* uz = a.find("enc.fwd.U_z");
    if (!wf || !uz) throw CheckpointError("checkpoint has a partial encoder");
    EncoderConfig ec{static_cast<int>(emb->cols()), static_cast<int>(uz->rows()),
                     static_cast<int>(wf->rows())};
    EncoderParams enc = EncoderParams::zeros(static_cast<std::size_t>(emb->rows()), ec);
    EncoderParams::visit(enc, [&](const std::string& name, auto& t) { fill_tensor(t, a, name); });
    cp.encoder = std::move(enc);
  }
  return cp;
}

void save_checkpoint(const std::string& path, const ModelCheckpoint& cp) {
  write_archive(path, cp.to_archive());
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  return ModelCheckpoint::from_archive(read_archive(path));
}

// ---------------------------------------------------------------------------
// Training

namespace {

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

std::vector<ParamView> trainable_views(ModelParams& params, const ModelParams& grads,
                                       const ModelConfig& config) {
  std::vector<ParamView> views;
  ModelParams::visit(params, [&](const std::string& name, auto& t, bool trainable) {
    if (!trainable) return;
    if (config.freeze_stitches && name.starts_with("stitch")) return;
    views.push_back({name, t.data(), nullptr, t.size()});
  });
  std::size_t k = 0;
  ModelParams::visit(grads, [&](const std::string& name, const auto& t, bool trainable) {
    if (!trainable) return;
    if (config.freeze_stitches && name.starts_with("stitch")) return;
    views[k++].grad = t.data();
  });
  return views;
}

Matrix encode_all(const EncoderParams& enc, const std::vector<std::vector<int>>& seqs) {
  Matrix out(static_cast<Eigen::Index>(seqs.size()), enc.W_f.rows());
  for (std::size_t i = 0; i < seqs.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = encode_tweet(seqs[i], enc).transpose();
  return out;
}

}  // namespace

TrainResult train(const TrainData& data, const ModelConfig& config,
                  const FineTuneInputs* fine_tune) {
  config.validate();
  const auto n = static_cast<std::size_t>(data.embeddings.rows());
  if (data.labels.size() != n || data.counts.rows() != data.embeddings.rows() ||
      (config.architecture != Architecture::kSingleTask &&
       data.features.rows() != data.embeddings.rows()))
    throw ShapeError("train: embeddings, features, labels and counts must have one row per record");
  std::array<std::size_t, 2> class_counts{};
  for (int y : data.labels) {
    if (y != 0 && y != 1) throw TrainingError("train: label outside {0, 1}");
    ++class_counts[static_cast<std::size_t>(y)];
  }
  if (class_counts[0] == 0 || class_counts[1] == 0)
    throw TrainingError("train: training data must contain both classes");
  const bool tune_encoder = !config.encoder_frozen;
  if (tune_encoder && (fine_tune == nullptr || fine_tune->sequences.size() != n))
    throw ConfigError("train: encoder fine-tuning needs the encoder and one sequence per record");

  TrainResult result;
  auto& cp = result.checkpoint;
  cp.config = config;
  cp.transform = TargetTransform::fit(data.counts, config.raw_targets);
  if (config.architecture != Architecture::kSingleTask) cp.scaler = FeatureScaler::fit(data.features);
  const Matrix features = cp.scaler.apply(data.features);
  cp.params = build_model(config);
  const Matrix targets = cp.transform.apply(data.counts);
  std::optional<EncoderParams> encoder;
  if (tune_encoder) encoder = fine_tune->encoder;

  const Rng root(config.seed);
  Rng shuffle_rng = root.split("shuffle");
  DropoutStreams streams{root.split("dropout_a"), root.split("dropout_b")};
  Adam adam(config.adam);
  Adam encoder_adam(config.adam);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(order));
    EpochStats stats;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      if (config.batch_norm && end - start < 2) continue;
      std::span<const std::size_t> idx(order.data() + start, end - start);

      Matrix emb;
      std::vector<EncoderTrace> traces;
      if (tune_encoder) {
        emb.resize(static_cast<Eigen::Index>(idx.size()), config.embed_dim);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          traces.push_back(encode_with_trace(fine_tune->sequences[idx[i]], *encoder));
          emb.row(static_cast<Eigen::Index>(i)) = traces.back().embedding.transpose();
        }
      } else {
        emb = gather_rows(data.embeddings, idx);
      }
      const Matrix feats = config.architecture == Architecture::kSingleTask
                               ? Matrix()
                               : gather_rows(features, idx);
      std::vector<int> labels;
      for (auto i : idx) labels.push_back(data.labels[i]);
      const Matrix tgt = gather_rows(targets, idx);

      ForwardPass pass = forward(cp.params, config, emb, feats, Mode::kTrain, &streams);
      JointLoss loss = joint_loss(pass.logits, labels, pass.reg, tgt, config.lambda);
      ModelGrads grads = backward(cp.params, config, pass, loss.d_logits, loss.d_reg);
      commit_running_stats(cp.params, pass);
      adam.step(trainable_views(cp.params, grads.params, config));

      if (tune_encoder) {
        EncoderGrads eg = EncoderParams::zeros(static_cast<std::size_t>(encoder->vocab_size()),
                                               encoder->config());
        for (std::size_t i = 0; i < idx.size(); ++i)
          encoder_backward(grads.d_embeddings.row(static_cast<Eigen::Index>(i)).transpose(),
                           traces[i], *encoder, eg);
        std::vector<ParamView> ev;
        EncoderParams::visit(*encoder, [&](const std::string& name, auto& t) {
          ev.push_back({name, t.data(), nullptr, t.size()});
        });
        std::size_t k = 0;
        EncoderParams::visit(eg, [&](const std::string&, auto& t) { ev[k++].grad = t.data(); });
        encoder_adam.step(ev);
      }

      const auto bs = static_cast<double>(idx.size());
      stats.total += loss.total * bs;
      stats.ce += loss.ce * bs;
      stats.mse += loss.mse * bs;
      seen += idx.size();
    }
    if (seen > 0) {
      stats.total /= static_cast<double>(seen);
      stats.ce /= static_cast<double>(seen);
      stats.mse /= static_cast<double>(seen);
    }
    cp.encoder = encoder;
    const Matrix all_emb = tune_encoder ? encode_all(*encoder, fine_tune->sequences) : data.embeddings;
    const Prediction pred = predict(cp, all_emb, data.features);
    stats.train_f1 = compute_metrics(pred.labels, data.labels).macro.f1;
    result.history.push_back(stats);
  }
  cp.encoder = encoder;
  return result;
}

// ---------------------------------------------------------------------------

Prediction predict(const ModelCheckpoint& cp, const Matrix& embeddings, const Matrix& features,
                   const ModelConfig* expected) {
  if (cp.version != kModelFormatVersion)
    throw VersionError("unsupported model checkpoint version " + std::to_string(cp.version));
  const auto& c = cp.config;
  if (expected) {
    if (expected->architecture != c.architecture || expected->embed_dim != c.embed_dim ||
        expected->hidden != c.hidden || expected->batch_norm != c.batch_norm) {
      auto describe = [](const ModelConfig& m) {
        std::string widths;
        for (std::size_t i = 0; i < m.hidden.size(); ++i)
          widths += (i ? "," : "") + std::to_string(m.hidden[i]);
        return std::string(architecture_name(m.architecture)) + " D=" +
               std::to_string(m.embed_dim) + " hidden=" + widths +
               " batch_norm=" + (m.batch_norm ? "true" : "false");
      };
      throw ConfigMismatchError("checkpoint config does not match the requested model:\n  checkpoint: " +
                                describe(c) + "\n  requested:  " + describe(*expected));
    }
  }
  if (embeddings.cols() != c.embed_dim)
    throw ConfigMismatchError("embeddings have " + std::to_string(embeddings.cols()) +
                              " columns, checkpoint expects " + std::to_string(c.embed_dim));
  const Matrix scaled = c.architecture == Architecture::kSingleTask ? features : cp.scaler.apply(features);
  ForwardPass pass = forward(cp.params, c, embeddings, scaled, Mode::kInfer, nullptr);
  Prediction p;
  p.probabilities = softmax(pass.logits);
  p.labels.resize(static_cast<std::size_t>(pass.logits.rows()));
  for (Eigen::Index i = 0; i < pass.logits.rows(); ++i)
    p.labels[static_cast<std::size_t>(i)] = pass.logits(i, 1) > pass.logits(i, 0) ? 1 : 0;
  if (pass.reg.size() > 0) p.engagement = cp.transform.invert(pass.reg);
  return p;
}

}  // namespace bmt
