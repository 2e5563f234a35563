#include "bmt/verify/suite.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bmt/cross_stitch.hpp"
#include "bmt/encoder.hpp"
#include "bmt/layers.hpp"
#include "bmt/metrics.hpp"
#include "bmt/model.hpp"
#include "bmt/synth.hpp"
#include "bmt/verify/oracles.hpp"

namespace bmt::verify {

namespace {

Matrix randn(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

Vector randn_vec(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

Eigen::Index dim(Rng& rng, Eigen::Index lo, Eigen::Index hi) {
  return lo + static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
}

// --- layer cases ------------------------------------------------------------

GradCheckResult fc_case(Rng& rng, double fault) {
  const auto b = dim(rng, 1, 5), in = dim(rng, 1, 6), out = dim(rng, 1, 6);
  Matrix x = randn(b, in, rng);
  FcParams<double> p{randn(out, in, rng), randn_vec(out, rng)};
  const Matrix R = randn(b, out, rng);
  auto fwd = fc_forward(x, p);
  auto g = fc_backward(R, fwd.cache, p);
  Matrix dW = g.dW * fault;
  auto loss = [&] { return fc_forward(x, p).y.cwiseProduct(R).sum(); };
  return grad_check(loss, {param_view("W", p.W, dW), param_view("b", p.b, g.db),
                           param_view("x", x, g.dx)});
}

GradCheckResult batchnorm_case(Rng& rng, double) {
  // With two rows the normalised output is +-1 whatever x is, so dx is of
  // order epsilon and below finite-difference resolution.
  const auto b = dim(rng, 3, 6), w = dim(rng, 1, 5);
  Matrix x = randn(b, w, rng, 2.0);
  x.array() += 1.0;
  auto p = BatchNormParams<double>::identity(w);
  p.gamma = (Vector::Ones(w) + randn_vec(w, rng, 0.3));
  p.beta = randn_vec(w, rng, 0.3);
  const Matrix R = randn(b, w, rng);
  auto fwd = batchnorm_forward(x, p, Mode::kTrain);
  auto g = batchnorm_backward(R, fwd.cache, p);
  auto loss = [&] { return batchnorm_forward(x, p, Mode::kTrain).y.cwiseProduct(R).sum(); };
  return grad_check(loss, {param_view("x", x, g.dx), param_view("gamma", p.gamma, g.dgamma),
                           param_view("beta", p.beta, g.dbeta)});
}

GradCheckResult dropout_case(Rng& rng, double) {
  const auto b = dim(rng, 1, 5), w = dim(rng, 1, 6);
  Matrix x = randn(b, w, rng);
  const double rate = rng.uniform(0.1, 0.7);
  const Rng mask_rng = rng.split("mask");
  const Matrix R = randn(b, w, rng);
  Rng r0 = mask_rng;
  auto fwd = dropout_forward(x, rate, Mode::kTrain, r0);
  const Matrix dx = dropout_backward(R, fwd);
  auto loss = [&] {
    Rng r = mask_rng;
    return dropout_forward(x, rate, Mode::kTrain, r).y.cwiseProduct(R).sum();
  };
  return grad_check(loss, {param_view("x", x, dx)});
}

GruParams<double> random_gru(Eigen::Index h, Eigen::Index e, Rng& rng) {
  auto p = GruParams<double>::zeros(h, e);
  GruParams<double>::visit(p, [&](const char*, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = 0.5 * rng.normal();
  });
  return p;
}

GradCheckResult gru_case(Rng& rng, double) {
  const Eigen::Index H = 4, E = 3;
  const std::size_t T = 5;
  auto p = random_gru(H, E, rng);
  std::vector<Vector> xs;
  for (std::size_t t = 0; t < T; ++t) xs.push_back(randn_vec(E, rng));
  const Vector R = randn_vec(H, rng);
  auto run = run_gru(xs, p);
  auto acc = GruParams<double>::zeros(H, E);
  std::vector<Vector> dxs(T);
  Vector dh = R;
  for (std::size_t t = T; t-- > 0;) {
    auto g = gru_cell_backward(dh, run.steps[t], p, acc);
    dxs[t] = g.dx;
    dh = g.dh_prev;
  }
  auto loss = [&] { return run_gru(xs, p).final_state.dot(R); };
  std::vector<ParamView> views;
  std::vector<std::pair<std::string, const double*>> grads;
  GruParams<double>::visit(acc, [&](const char* n, const auto& t) {
    grads.emplace_back(n, t.data());
  });
  std::size_t k = 0;
  GruParams<double>::visit(p, [&](const char* n, auto& t) {
    views.push_back({n, t.data(), grads[k++].second, t.size()});
  });
  for (std::size_t t = 0; t < T; ++t)
    views.push_back(param_view("x" + std::to_string(t), xs[t], dxs[t]));
  return grad_check(loss, views);
}

GradCheckResult bigru_case(Rng& rng, double) {
  const std::size_t V = 7;
  const EncoderConfig c{3, 4, 5};
  EncoderParams p = EncoderParams::init(V, c, rng);
  EncoderParams::visit(p, [&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += 0.3 * rng.normal();
  });
  std::vector<int> seq;
  for (int i = 0; i < 6; ++i) seq.push_back(static_cast<int>(rng.uniform_int(V)));
  const Vector R = randn_vec(c.embed_dim, rng);
  EncoderGrads acc = EncoderParams::zeros(V, c);
  encoder_backward(R, encode_with_trace(seq, p), p, acc);
  auto loss = [&] { return encode_tweet(seq, p).dot(R); };
  std::vector<const double*> grads;
  EncoderParams::visit(acc, [&](const std::string&, const auto& t) { grads.push_back(t.data()); });
  std::vector<ParamView> views;
  std::size_t k = 0;
  EncoderParams::visit(p, [&](const std::string& n, auto& t) {
    views.push_back({n, t.data(), grads[k++], t.size()});
  });
  return grad_check(loss, views);
}

GradCheckResult stitch_case(Rng& rng, double) {
  const auto b = dim(rng, 1, 5), w = dim(rng, 1, 6);
  Matrix xa = randn(b, w, rng), xb = randn(b, w, rng);
  CrossStitchUnit<double> u;
  u.alpha = randn(2, 2, rng);
  const Matrix Ra = randn(b, w, rng), Rb = randn(b, w, rng);
  auto fwd = stitch_forward(xa, xb, u);
  auto g = stitch_backward(Ra, Rb, fwd.cache, u);
  auto loss = [&] {
    auto f = stitch_forward(xa, xb, u);
    return f.y_a.cwiseProduct(Ra).sum() + f.y_b.cwiseProduct(Rb).sum();
  };
  return grad_check(loss, {param_view("x_a", xa, g.dx_a), param_view("x_b", xb, g.dx_b),
                           param_view("alpha", u.alpha, g.dalpha)});
}

std::vector<int> random_labels(Eigen::Index n, Rng& rng) {
  std::vector<int> y;
  for (Eigen::Index i = 0; i < n; ++i) y.push_back(static_cast<int>(rng.uniform_int(2)));
  return y;
}

GradCheckResult ce_case(Rng& rng, double) {
  const auto b = dim(rng, 1, 6);
  Matrix logits = randn(b, 2, rng, 2.0);
  const auto labels = random_labels(b, rng);
  const Matrix g = softmax_cross_entropy<double>(logits, labels).grad;
  auto loss = [&] { return softmax_cross_entropy<double>(logits, labels).loss; };
  return grad_check(loss, {param_view("logits", logits, g)});
}

GradCheckResult mse_case(Rng& rng, double) {
  const auto b = dim(rng, 1, 6);
  Matrix pred = randn(b, 2, rng), target = randn(b, 2, rng);
  const Matrix g = mse_loss<double>(pred, target).grad;
  auto loss = [&] { return mse_loss<double>(pred, target).loss; };
  return grad_check(loss, {param_view("pred", pred, g)});
}

// --- joint network ------------------------------------------------------------

double min_abs_pre_relu(const ForwardPass& pass) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto* levels : {&pass.a, &pass.b})
    for (const auto& c : *levels) m = std::min(m, c.pre_relu.cwiseAbs().minCoeff());
  return m;
}

GradCheckResult joint_case(Rng& rng, Architecture arch) {
  ModelConfig cfg;
  cfg.architecture = arch;
  cfg.embed_dim = 6;
  cfg.hidden = {5, 4};
  cfg.dropout = 0.3;
  cfg.batch_norm = true;
  cfg.lambda = 0.5;
  cfg.batch_size = 4;
  const Eigen::Index batch = 4;
  // Central differences are meaningless across a relu kink, so draw until
  // every pre-activation is clear of zero.
  for (int attempt = 0;; ++attempt) {
    cfg.seed = rng.next_u64();
    ModelParams params = build_model(cfg);
    for (auto* br : {&params.a, &params.b})
      for (auto& bn : br->bn) {
        bn.gamma += randn_vec(bn.gamma.size(), rng, 0.3);
        bn.beta = randn_vec(bn.beta.size(), rng, 0.3);
      }
    for (auto& s : params.stitches) s.alpha += randn(2, 2, rng, 0.2);
    Matrix emb = randn(batch, cfg.embed_dim, rng);
    Matrix feats = randn(batch, static_cast<Eigen::Index>(kNumFeatures), rng);
    const auto labels = random_labels(batch, rng);
    const Matrix targets = randn(batch, 2, rng);
    const DropoutStreams streams{rng.split("dropout_a"), rng.split("dropout_b")};

    auto run = [&] {
      DropoutStreams s = streams;
      return forward(params, cfg, emb, feats, Mode::kTrain, &s);
    };
    ForwardPass pass = run();
    if (min_abs_pre_relu(pass) < 1e-3 && attempt < 1000) continue;
    JointLoss jl = joint_loss(pass.logits, labels, pass.reg, targets, cfg.lambda);
    ModelGrads g = backward(params, cfg, pass, jl.d_logits, jl.d_reg);

    auto loss = [&] {
      ForwardPass p = run();
      return joint_loss(p.logits, labels, p.reg, targets, cfg.lambda).total;
    };
    std::vector<const double*> grads;
    ModelParams::visit(g.params, [&](const std::string&, const auto& t, bool trainable) {
      if (trainable) grads.push_back(t.data());
    });
    std::vector<ParamView> views;
    std::size_t k = 0;
    ModelParams::visit(params, [&](const std::string& n, auto& t, bool trainable) {
      if (trainable) views.push_back({n, t.data(), grads[k++], t.size()});
    });
    views.push_back(param_view("embeddings", emb, g.d_embeddings));
    views.push_back(param_view("features", feats, g.d_features));
    return grad_check(loss, views);
  }
}

std::string format_error(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

}  // namespace

const std::vector<GradCase>& gradient_cases() {
  static const std::vector<GradCase> cases{
      {"fc", 1e-6, fc_case},
      {"batchnorm", 1e-5, batchnorm_case},
      {"dropout", 1e-5, dropout_case},
      {"gru_unrolled", 1e-5, gru_case},
      {"bigru_encoder", 1e-5, bigru_case},
      {"cross_stitch", 1e-6, stitch_case},
      {"softmax_ce", 1e-6, ce_case},
      {"mse", 1e-8, mse_case},
      {"joint_multitask", 1e-4,
       [](Rng& r, double) { return joint_case(r, Architecture::kMultitask); }},
      {"joint_concat_mlp", 1e-4,
       [](Rng& r, double) { return joint_case(r, Architecture::kConcatMlp); }},
  };
  return cases;
}

std::vector<CheckResult> gradient_checks(const SuiteOptions& opt) {
  std::vector<CheckResult> out;
  const Rng root = Rng(opt.seed).split("gradient_checks");
  for (const auto& c : gradient_cases()) {
    Rng rng = root.split(c.name);
    CheckResult r{"grad/" + c.name, 0.0, c.threshold, true, ""};
    for (int i = 0; i < opt.configs_per_case; ++i) {
      const double fault = c.name == "fc" ? opt.fault_scale : 1.0;
      const GradCheckResult g = c.run(rng, fault);
      if (g.max_relative_error >= r.measured) {
        r.measured = g.max_relative_error;
        r.detail = "worst " + g.worst_param + "[" + std::to_string(g.worst_index) +
                   "] analytic " + format_error(g.analytic) + " numeric " +
                   format_error(g.numeric);
      }
    }
    r.passed = r.measured < r.threshold;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Branch B and its head evaluated on their own, written against the layer
// functions directly.
Matrix isolated_branch_b(const ModelParams& p, const ModelConfig& cfg, const Matrix& x0,
                         Mode mode, Rng& rng) {
  Matrix x = x0;
  for (std::size_t l = 0; l < p.b.fc.size(); ++l) {
    x = fc_forward(x, p.b.fc[l]).y;
    if (cfg.batch_norm) x = batchnorm_forward(x, p.b.bn[l], mode).y;
    x = elementwise(UnaryOp::kRelu, x);
    x = dropout_forward(x, cfg.dropout, mode, rng).y;
  }
  return fc_forward(x, p.head_b).y;
}

}  // namespace

CheckResult identity_stitch_check(int inputs, std::uint64_t seed) {
  CheckResult r{"identity_stitch", 0.0, 1.0, false, ""};
  ModelConfig mt;
  mt.embed_dim = 8;
  mt.hidden = {6, 5};
  mt.dropout = 0.4;
  mt.stitch_init.mode = StitchInitMode::kIdentity;
  mt.seed = seed;
  ModelConfig st = mt;
  st.architecture = Architecture::kSingleTask;
  const ModelParams mp = build_model(mt);
  const ModelParams sp = build_model(st);
  Rng rng = Rng(seed).split("identity_inputs");
  int mismatches = 0;
  for (int i = 0; i < inputs; ++i) {
    const Eigen::Index batch = dim(rng, 2, 8);
    const Matrix emb = randn(batch, mt.embed_dim, rng);
    const Matrix feats = randn(batch, static_cast<Eigen::Index>(kNumFeatures), rng);
    const Rng stream_root = rng.split(static_cast<std::uint64_t>(i));
    for (Mode mode : {Mode::kInfer, Mode::kTrain}) {
      DropoutStreams s_mt{stream_root.split("a"), stream_root.split("b")};
      DropoutStreams s_st = s_mt;
      Rng s_b = s_mt.b;
      const ForwardPass full = forward(mp, mt, emb, feats, mode, &s_mt);
      const ForwardPass single = forward(sp, st, emb, Matrix(), mode, &s_st);
      const Matrix reg = isolated_branch_b(mp, mt, feats, mode, s_b);
      if (!exactly_equal(full.logits, single.logits)) ++mismatches;
      if (!exactly_equal(full.reg, reg)) ++mismatches;
    }
  }
  r.measured = mismatches;
  r.passed = mismatches == 0;
  r.detail = std::to_string(inputs) + " inputs x 2 modes, " + std::to_string(mismatches) +
             " mismatching outputs";
  return r;
}

CheckResult feature_oracle_check(std::size_t tweets, std::uint64_t seed) {
  CheckResult r{"feature_oracle", 0.0, 1.0, false, ""};
  SynthConfig sc;
  sc.n_blackmarket = tweets / 2;
  sc.n_genuine = tweets - tweets / 2;
  sc.difficulty = 0.3;
  const Dataset d = synth_generate(sc, seed);
  const auto& sl = builtin_sentiment_lexicon();
  const auto& pl = builtin_pos_lexicon();
  std::size_t mismatches = 0, non_ascii = 0;
  for (const auto& rec : d.records) {
    if (std::any_of(rec.text.begin(), rec.text.end(),
                    [](char c) { return static_cast<unsigned char>(c) >= 0x80; }))
      ++non_ascii;
    if (tokenize(rec.text) != scan_tokens(rec.text)) ++mismatches;
    if (extract_features(rec, sl, pl) != reference_features(rec, sl, pl)) ++mismatches;
    TweetRecord bare = rec;
    bare.mentions.reset();
    bare.hashtags.reset();
    bare.urls.reset();
    if (extract_features(bare, sl, pl) != reference_features(bare, sl, pl)) ++mismatches;
  }
  r.measured = static_cast<double>(mismatches + non_ascii);
  r.passed = mismatches == 0 && non_ascii == 0;
  r.detail = std::to_string(d.records.size()) + " tweets, " + std::to_string(mismatches) +
             " mismatches, " + std::to_string(non_ascii) + " outside the oracle's ASCII domain";
  return r;
}

CheckResult metrics_recount_check(std::size_t pairs, std::uint64_t seed) {
  CheckResult r{"metrics_recount", 0.0, 1.0, false, ""};
  Rng rng = Rng(seed).split("metrics_pairs");
  std::vector<int> preds, labels;
  for (std::size_t i = 0; i < pairs; ++i) {
    labels.push_back(static_cast<int>(rng.uniform_int(2)));
    preds.push_back(rng.bernoulli(0.8) ? labels.back() : 1 - labels.back());
  }
  const bool same = identical(compute_metrics(preds, labels), recount_metrics(preds, labels));
  r.measured = same ? 0.0 : 1.0;
  r.passed = same;
  r.detail = std::to_string(pairs) + " prediction/label pairs";
  return r;
}

std::vector<CheckResult> run_all(const SuiteOptions& opt) {
  auto out = gradient_checks(opt);
  out.push_back(identity_stitch_check(100, opt.seed));
  out.push_back(feature_oracle_check(200, opt.seed));
  out.push_back(metrics_recount_check(1000, opt.seed));
  return out;
}

}  // namespace bmt::verify
