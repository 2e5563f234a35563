#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "bmt/archive.hpp"
#include "bmt/metrics.hpp"
#include "bmt/model.hpp"
#include "bmt/verify/suite.hpp"

using namespace bmt;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.embed_dim = 6;
  c.hidden = {5, 4};
  c.epochs = 3;
  c.batch_size = 8;
  return c;
}

// Randomises every tensor, including running statistics and stitches.
void scramble(ModelParams& p, Rng& rng) {
  ModelParams::visit(p, [&](const std::string& name, auto& t, bool) {
    const bool var = name.find("running_var") != std::string::npos;
    for (Eigen::Index i = 0; i < t.size(); ++i)
      t.data()[i] = var ? rng.uniform(0.5, 2.0) : rng.uniform(-1.0, 1.0);
  });
}

// Straight-line infer-mode forward pass over one row.
struct RefOut {
  std::vector<double> logits, reg;
};

std::vector<double> ref_level(const std::vector<double>& x, const FcParams<double>& fc,
                              const BatchNormParams<double>* bn) {
  std::vector<double> out(static_cast<std::size_t>(fc.out()));
  for (Eigen::Index o = 0; o < fc.out(); ++o) {
    double s = fc.b(o);
    for (Eigen::Index i = 0; i < fc.in(); ++i) s += fc.W(o, i) * x[static_cast<std::size_t>(i)];
    if (bn)
      s = bn->gamma(o) * (s - bn->running_mean(o)) / std::sqrt(bn->running_var(o) + bn->epsilon) +
          bn->beta(o);
    out[static_cast<std::size_t>(o)] = s > 0.0 ? s : 0.0;
  }
  return out;
}

std::vector<double> ref_affine(const std::vector<double>& x, const FcParams<double>& fc) {
  std::vector<double> out(static_cast<std::size_t>(fc.out()));
  for (Eigen::Index o = 0; o < fc.out(); ++o) {
    double s = fc.b(o);
    for (Eigen::Index i = 0; i < fc.in(); ++i) s += fc.W(o, i) * x[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(o)] = s;
  }
  return out;
}

RefOut reference_forward(const ModelParams& p, const ModelConfig& c, const Matrix& emb,
                         const Matrix& feat, Eigen::Index row) {
  std::vector<double> a(emb.row(row).data(), emb.row(row).data() + emb.cols());
  std::vector<double> b(feat.row(row).data(), feat.row(row).data() + feat.cols());
  for (std::size_t l = 0; l < c.hidden.size(); ++l) {
    a = ref_level(a, p.a.fc[l], c.batch_norm ? &p.a.bn[l] : nullptr);
    b = ref_level(b, p.b.fc[l], c.batch_norm ? &p.b.bn[l] : nullptr);
    const auto& al = p.stitches[l].alpha;
    std::vector<double> ya(a.size()), yb(b.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      ya[j] = al(0, 0) * a[j] + al(0, 1) * b[j];
      yb[j] = al(1, 0) * a[j] + al(1, 1) * b[j];
    }
    a = ya;
    b = yb;
  }
  return {ref_affine(a, p.head_a), ref_affine(b, p.head_b)};
}

// Two Gaussian clouds split by a random hyperplane through the origin.
TrainData separable(std::size_t n, int dim, std::uint64_t seed) {
  Rng rng(seed);
  Vector w = random_matrix(dim, 1, rng);
  TrainData d;
  d.embeddings.resize(static_cast<Eigen::Index>(n), dim);
  d.features = random_matrix(static_cast<Eigen::Index>(n), kNumFeatures, rng, 0.0, 5.0);
  d.counts.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    Vector x(dim);
    for (int k = 0; k < dim; ++k) x(k) = rng.normal();
    const int label = static_cast<int>(i % 2);
    // Push each point to its side of the hyperplane.
    x += (label == 1 ? 1.0 : -1.0) * (std::abs(x.dot(w)) + 0.5) / w.squaredNorm() * w -
         (x.dot(w) / w.squaredNorm()) * w;
    d.embeddings.row(r) = x.transpose();
    d.labels.push_back(label);
    d.counts(r, 0) = static_cast<double>(rng.uniform_int(label ? 80 : 6));
    d.counts(r, 1) = static_cast<double>(rng.uniform_int(label ? 120 : 16));
  }
  return d;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("bmt_test_model_" + name)).string();
}

}  // namespace

TEST_CASE("build_model shapes and initialisation") {
  ModelConfig c;
  c.embed_dim = 8;
  c.hidden = {4};
  ModelParams p = build_model(c);
  CHECK(p.a.fc[0].W.rows() == 4);
  CHECK(p.a.fc[0].W.cols() == 8);
  CHECK(p.b.fc[0].W.rows() == 4);
  CHECK(p.b.fc[0].W.cols() == 12);
  CHECK(p.stitches.size() == 1);
  CHECK(p.head_a.W.rows() == 2);
  CHECK(p.head_b.W.rows() == 2);
  CHECK(p.a.fc[0].b.isZero(0.0));
  CHECK(exactly_equal(p.stitches[0].alpha, init_stitch(StitchInit{}).alpha));

  ModelParams q = build_model(c);
  std::vector<std::pair<std::string, Matrix>> first, second;
  ModelParams::visit(p, [&](const std::string& n, const auto& t, bool) { first.emplace_back(n, Matrix(t)); });
  ModelParams::visit(q, [&](const std::string& n, const auto& t, bool) { second.emplace_back(n, Matrix(t)); });
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].first == second[i].first);
    CHECK(exactly_equal(first[i].second, second[i].second));
  }

  c.stitch_init.mode = StitchInitMode::kIdentity;
  c.hidden = {6, 5, 3};
  for (const auto& s : build_model(c).stitches) CHECK(exactly_equal(s.alpha, Matrix::Identity(2, 2)));
  CHECK(build_model(c).stitches.size() == 3);

  ModelConfig single = c;
  single.architecture = Architecture::kSingleTask;
  ModelParams sp = build_model(single);
  CHECK(sp.b.fc.empty());
  CHECK(sp.stitches.empty());
  CHECK(sp.head_b.W.size() == 0);
  CHECK(exactly_equal(sp.a.fc[0].W, build_model(c).a.fc[0].W));

  ModelConfig concat = c;
  concat.architecture = Architecture::kConcatMlp;
  CHECK(build_model(concat).a.fc[0].W.cols() == c.embed_dim + 12);
}

TEST_CASE("config validation and canonical text") {
  ModelConfig c = tiny_config();
  c.lambda = 0.25;
  c.stitch_init = {StitchInitMode::kBiased, 0.8, 0.2};
  c.adam.step_size = 3e-4;
  c.seed = 123456789012345ULL;
  CHECK(ModelConfig::parse_canonical(c.canonical_text()) == c);
  CHECK(ModelConfig::parse_canonical(c.canonical_text()).canonical_text() == c.canonical_text());

  auto bad = [](auto mutate) {
    ModelConfig m = tiny_config();
    mutate(m);
    CHECK_THROWS_AS(m.validate(), ConfigError);
  };
  bad([](ModelConfig& m) { m.lambda = -0.1; });
  bad([](ModelConfig& m) { m.hidden = {}; });
  bad([](ModelConfig& m) { m.hidden = {4, 0}; });
  bad([](ModelConfig& m) { m.batch_size = 1; });
  bad([](ModelConfig& m) { m.dropout = 1.0; });
  ModelConfig ok = tiny_config();
  ok.batch_norm = false;
  ok.batch_size = 1;
  CHECK_NOTHROW(ok.validate());
  CHECK_THROWS_AS(ModelConfig::parse_canonical("nonsense=1\n"), ConfigError);
}

TEST_CASE("identity stitches reproduce the isolated branches bitwise") {
  const auto r = verify::identity_stitch_check(100, 5);
  CAPTURE(r.detail);
  CHECK(r.measured == 0.0);
  CHECK(r.passed);
}

TEST_CASE("forward matches a straight-line reference") {
  Rng rng(2);
  for (bool bn : {true, false}) {
    ModelConfig c = tiny_config();
    c.batch_norm = bn;
    ModelParams p = build_model(c);
    scramble(p, rng);
    Matrix emb = random_matrix(7, c.embed_dim, rng), feat = random_matrix(7, 12, rng);
    auto pass = forward(p, c, emb, feat, Mode::kInfer, nullptr);
    for (Eigen::Index i = 0; i < 7; ++i) {
      auto ref = reference_forward(p, c, emb, feat, i);
      for (Eigen::Index k = 0; k < 2; ++k) {
        CHECK(std::abs(pass.logits(i, k) - ref.logits[static_cast<std::size_t>(k)]) < 1e-12);
        CHECK(std::abs(pass.reg(i, k) - ref.reg[static_cast<std::size_t>(k)]) < 1e-12);
      }
    }
  }
}

TEST_CASE("identical rows give identical outputs") {
  Rng rng(3);
  ModelConfig c = tiny_config();
  ModelParams p = build_model(c);
  scramble(p, rng);
  Matrix emb = random_matrix(1, c.embed_dim, rng).replicate(5, 1);
  Matrix feat = random_matrix(1, 12, rng).replicate(5, 1);
  auto pass = forward(p, c, emb, feat, Mode::kInfer, nullptr);
  for (Eigen::Index i = 1; i < 5; ++i) {
    CHECK(exactly_equal(pass.logits.row(i), pass.logits.row(0)));
    CHECK(exactly_equal(pass.reg.row(i), pass.reg.row(0)));
  }
  CHECK_THROWS_AS(forward(p, c, Matrix(Matrix::Zero(5, 7)), feat, Mode::kInfer, nullptr), ShapeError);
}

TEST_CASE("joint_loss examples") {
  Rng rng(4);
  Matrix logits = random_matrix(6, 2, rng, -3, 3), reg = random_matrix(6, 2, rng), tgt = random_matrix(6, 2, rng);
  std::vector<int> labels{0, 1, 1, 0, 1, 0};
  auto zero = joint_loss(logits, labels, reg, tgt, 0.0);
  CHECK(zero.total == softmax_cross_entropy(logits, labels).loss);
  CHECK(zero.ce == zero.total);
  auto weighted = joint_loss(logits, labels, reg, tgt, 0.3);
  CHECK(weighted.mse == mse_loss(reg, tgt).loss);
  CHECK(weighted.total == doctest::Approx(weighted.ce + 0.3 * weighted.mse).epsilon(1e-15));

  Matrix perfect(2, 2);
  perfect << 60, 0, 0, 60;
  auto best = joint_loss(perfect, std::vector<int>{0, 1}, tgt.topRows(2), tgt.topRows(2), 0.5);
  CHECK(best.total < 1e-10);
}

TEST_CASE("end-to-end gradient check on the tiny network") {
  const auto& cases = verify::gradient_cases();
  for (const auto& gc : cases) {
    if (gc.name.rfind("joint_", 0) != 0) continue;
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      Rng child = rng.split(static_cast<std::uint64_t>(trial));
      CAPTURE(gc.name);
      CHECK(gc.run(child, 1.0).max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("target transform") {
  Matrix counts(4, 2);
  counts << 0, 1, 3, 10, 7, 100, 15, 1000;
  auto t = TargetTransform::fit(counts, false);
  Matrix z = t.apply(counts);
  CHECK(std::abs(z.col(0).mean()) < 1e-12);
  Matrix back = t.invert(z);
  CHECK((back - counts).cwiseAbs().maxCoeff() < 1e-9);

  Matrix at_mean(1, 2);
  at_mean << 0.0, 0.0;
  Matrix m = t.invert(at_mean);
  CHECK(m(0, 0) == doctest::Approx(std::expm1(t.mean[0])).epsilon(1e-15));

  Matrix constant = Matrix::Constant(3, 2, 5.0);
  auto c = TargetTransform::fit(constant, false);
  CHECK(c.std[0] == 1e-6);
  Matrix negative = Matrix::Constant(1, 2, -1e6);
  CHECK(t.invert(negative).minCoeff() == 0.0);
}

TEST_CASE("training needs both classes") {
  TrainData d = separable(16, 6, 1);
  for (auto& y : d.labels) y = 1;
  CHECK_THROWS_AS(train(d, tiny_config()), TrainingError);
}

TEST_CASE("overfit a 32-example separable fold") {
  TrainData d = separable(32, 32, 2);
  ModelConfig c;
  c.embed_dim = 32;
  c.hidden = {16, 8};
  c.dropout = 0.0;
  c.epochs = 500;
  c.batch_size = 32;
  auto r = train(d, c);
  REQUIRE(r.history.size() == 500);
  CHECK(r.history.back().train_f1 == 1.0);
  CHECK(r.history.back().total < 0.01 * r.history.front().total);
}

TEST_CASE("training is deterministic") {
  TrainData d = separable(40, 6, 3);
  ModelConfig c = tiny_config();
  c.epochs = 4;
  auto a = train(d, c), b = train(d, c);
  CHECK(a.history == b.history);
  CHECK(encode_archive(a.checkpoint.to_archive()) == encode_archive(b.checkpoint.to_archive()));
  c.seed = 2;
  CHECK(encode_archive(train(d, c).checkpoint.to_archive()) !=
        encode_archive(a.checkpoint.to_archive()));
}

TEST_CASE("lambda 0 with frozen identity stitches equals the single-task classifier") {
  TrainData d = separable(45, 6, 4);
  ModelConfig mt = tiny_config();
  mt.lambda = 0.0;
  mt.stitch_init.mode = StitchInitMode::kIdentity;
  mt.freeze_stitches = true;
  mt.epochs = 5;
  ModelConfig st = mt;
  st.architecture = Architecture::kSingleTask;
  auto a = train(d, mt), b = train(d, st);

  auto collect = [](const ModelParams& p) {
    std::vector<std::pair<std::string, Matrix>> out;
    ModelParams::visit(p, [&](const std::string& n, const auto& t, bool) {
      if (n.rfind("a.", 0) == 0 || n.rfind("head_a.", 0) == 0) out.emplace_back(n, Matrix(t));
    });
    return out;
  };
  auto ta = collect(a.checkpoint.params), tb = collect(b.checkpoint.params);
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CAPTURE(ta[i].first);
    CHECK(ta[i].first == tb[i].first);
    CHECK(exactly_equal(ta[i].second, tb[i].second));
  }
  for (const auto& s : a.checkpoint.params.stitches) CHECK(exactly_equal(s.alpha, Matrix::Identity(2, 2)));
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].ce == b.history[e].ce);
    CHECK(a.history[e].train_f1 == b.history[e].train_f1);
  }
}

TEST_CASE("predict examples") {
  ModelConfig c;
  c.embed_dim = 3;
  c.hidden = {2};
  c.batch_norm = false;
  c.dropout = 0.0;
  ModelCheckpoint cp;
  cp.config = c;
  cp.params = build_model(c);
  ModelParams::visit(cp.params, [](const std::string&, auto& t, bool) { t.setZero(); });
  cp.params.head_a.b << 2.0, 0.0;
  cp.transform.mean = {std::log1p(40.0), std::log1p(3.0)};
  cp.transform.std = {0.7, 1.3};

  Rng rng(5);
  Matrix emb = random_matrix(4, 3, rng), feat = random_matrix(4, 12, rng);
  auto p = predict(cp, emb, feat);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(p.labels[static_cast<std::size_t>(i)] == 0);
    CHECK(p.probabilities(i, 0) == doctest::Approx(0.8808).epsilon(1e-4));
    CHECK(p.probabilities(i, 0) + p.probabilities(i, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.engagement(i, 0) == doctest::Approx(40.0).epsilon(1e-12));
    CHECK(p.engagement(i, 1) == doctest::Approx(3.0).epsilon(1e-12));
  }
}

TEST_CASE("predictions are invariant to batch composition and logit scale") {
  TrainData d = separable(40, 6, 5);
  ModelConfig c = tiny_config();
  auto cp = train(d, c).checkpoint;
  auto all = predict(cp, d.embeddings, d.features);
  for (Eigen::Index i = 0; i < 40; ++i) {
    auto one = predict(cp, d.embeddings.row(i), d.features.row(i));
    CHECK(one.labels[0] == all.labels[static_cast<std::size_t>(i)]);
    CHECK(std::abs(one.probabilities(0, 1) - all.probabilities(i, 1)) < 1e-12);
  }
  for (double scale : {0.01, 0.5, 3.0, 100.0}) {
    ModelCheckpoint scaled = cp;
    scaled.params.head_a.W *= scale;
    scaled.params.head_a.b *= scale;
    CHECK(predict(scaled, d.embeddings, d.features).labels == all.labels);
  }
}

TEST_CASE("checkpoint round trip and load errors") {
  TrainData d = separable(24, 6, 6);
  ModelConfig c = tiny_config();
  c.hidden = {8, 4};
  auto cp = train(d, c).checkpoint;
  const std::string path = temp_path("cp.bin"), again = temp_path("cp2.bin");
  save_checkpoint(path, cp);
  auto loaded = load_checkpoint(path);
  save_checkpoint(again, loaded);
  const std::string bytes = read_file(path);
  CHECK(bytes == read_file(again));
  CHECK(bytes.substr(0, 4) == "MTLB");
  CHECK(loaded.config == cp.config);
  CHECK(exactly_equal(loaded.params.a.fc[0].W, cp.params.a.fc[0].W));

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_archive(bad_magic), BadMagicError);
  CHECK_THROWS_AS(decode_archive(bytes.substr(0, bytes.size() - 3)), TruncatedError);
  CHECK_THROWS_AS(decode_archive(bytes.substr(0, 6)), TruncatedError);
  std::string future = bytes;
  future[4] = 9;
  CHECK_THROWS_AS(decode_archive(future), VersionError);
  CHECK_THROWS_AS(decode_archive(bytes + "x"), CheckpointError);

  TensorArchive wrong_shape = cp.to_archive();
  wrong_shape.tensors[0].value = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(ModelCheckpoint::from_archive(wrong_shape), ConfigMismatchError);

  ModelConfig expected = c;
  expected.hidden = {16, 8};
  CHECK_THROWS_AS(predict(loaded, d.embeddings, d.features, &expected), ConfigMismatchError);
  CHECK_NOTHROW(predict(loaded, d.embeddings, d.features, &c));
  CHECK_THROWS_AS(predict(loaded, Matrix(Matrix::Zero(3, 5)), Matrix(Matrix::Zero(3, 12))),
                  ConfigMismatchError);
  std::remove(path.c_str());
  std::remove(again.c_str());
}
