#include "doctest.h"

#include <cmath>
#include <vector>

#include "bmt/grad_check.hpp"
#include "bmt/layers.hpp"
#include "bmt/verify/suite.hpp"

using namespace bmt;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("fc_forward examples") {
  Rng rng(1);
  FcParams<double> id{Matrix::Identity(3, 3), Vector::Zero(3)};
  Matrix x = random_matrix(4, 3, rng);
  CHECK(exactly_equal(fc_forward(x, id).y, x));

  FcParams<double> p{Matrix::Ones(1, 2), Vector::Ones(1)};
  Matrix x1(1, 2);
  x1 << 1, 2;
  CHECK(fc_forward(x1, p).y(0, 0) == 4.0);

  CHECK_THROWS_AS(fc_forward(Matrix(2, 5), p), ShapeError);
}

TEST_CASE("fc_backward with zero upstream gradient is zero") {
  Rng rng(2);
  FcParams<double> p{random_matrix(3, 4, rng), random_matrix(3, 1, rng)};
  auto f = fc_forward(random_matrix(5, 4, rng), p);
  auto g = fc_backward(Matrix(Matrix::Zero(5, 3)), f.cache, p);
  CHECK(g.dW.isZero(0.0));
  CHECK(g.db.isZero(0.0));
  CHECK(g.dx.isZero(0.0));
  CHECK_THROWS_AS(fc_backward(Matrix(Matrix::Zero(4, 3)), f.cache, p), ShapeError);
}

TEST_CASE("batchnorm train mode standardises each column") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.uniform_int(30));
    Matrix x = random_matrix(n, 5, rng, -50.0, 50.0);
    auto f = batchnorm_forward(x, BatchNormParams<double>::identity(5), Mode::kTrain);
    for (Eigen::Index j = 0; j < 5; ++j) {
      const double mean = f.y.col(j).mean();
      const double var = (f.y.col(j).array() - mean).square().mean();
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(var - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("batchnorm constant column maps to zero") {
  Matrix x(4, 2);
  x << 3, 1, 3, 2, 3, 5, 3, 7;
  auto f = batchnorm_forward(x, BatchNormParams<double>::identity(2), Mode::kTrain);
  CHECK(f.y.col(0).isZero(0.0));
  CHECK(f.y.allFinite());
}

TEST_CASE("batchnorm batch of one in train mode is rejected") {
  CHECK_THROWS_AS(
      batchnorm_forward(Matrix(Matrix::Ones(1, 3)), BatchNormParams<double>::identity(3), Mode::kTrain),
      InvalidBatchError);
  // Inference accepts any batch size.
  auto f = batchnorm_forward(Matrix(Matrix::Ones(1, 3)), BatchNormParams<double>::identity(3),
                             Mode::kInfer);
  CHECK(f.y.rows() == 1);
}

TEST_CASE("batchnorm running statistics use momentum 0.9") {
  Matrix x(2, 1);
  x << 1, 3;
  auto p = BatchNormParams<double>::identity(1);
  auto f = batchnorm_forward(x, p, Mode::kTrain);
  CHECK(f.running_mean(0) == doctest::Approx(0.1 * 2.0).epsilon(1e-15));
  CHECK(f.running_var(0) == doctest::Approx(0.9 + 0.1 * 1.0).epsilon(1e-15));

  p.running_mean(0) = 2.0;
  p.running_var(0) = 4.0;
  auto inf = batchnorm_forward(x, p, Mode::kInfer);
  CHECK(inf.y(1, 0) == doctest::Approx(1.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-14));
  CHECK(inf.running_mean(0) == 2.0);
}

TEST_CASE("dropout examples") {
  Rng rng(4);
  Matrix x = random_matrix(6, 7, rng);
  auto none = dropout_forward(x, 0.0, Mode::kTrain, rng);
  CHECK(exactly_equal(none.y, x));
  CHECK(none.mask.isOnes(0.0));
  for (double rate : {0.1, 0.5, 0.9}) CHECK(exactly_equal(dropout_forward(x, rate, Mode::kInfer, rng).y, x));
  CHECK_THROWS_AS(dropout_forward(x, 1.0, Mode::kTrain, rng), ConfigError);
  CHECK_THROWS_AS(dropout_forward(x, -0.1, Mode::kTrain, rng), ConfigError);
}

TEST_CASE("dropout survivor fraction and scaling") {
  Rng rng(5);
  Matrix x = Matrix::Ones(1000, 100);
  for (double rate : {0.2, 0.5}) {
    auto f = dropout_forward(x, rate, Mode::kTrain, rng);
    CHECK(std::abs(f.mask.mean() - (1.0 - rate)) < 0.01);
    const double keep = 1.0 / (1.0 - rate);
    CHECK(f.y.unaryExpr([keep](double v) { return v == 0.0 || v == keep ? 0.0 : 1.0; }).sum() == 0.0);
  }
}

TEST_CASE("gru cell with zero parameters") {
  auto p = GruParams<double>::zeros(4, 3);
  Vector x(3);
  x << 1, -2, 3;
  Vector h(4);
  h << 0.2, -0.4, 1.0, -1.0;
  auto s = gru_cell_forward(x, h, p);
  CHECK(exactly_equal(s.h, Vector(0.5 * h)));
  CHECK(gru_cell_forward(x, Vector(Vector::Zero(4)), p).h.isZero(0.0));
  CHECK_THROWS_AS(gru_cell_forward(Vector(Vector::Zero(2)), h, p), ShapeError);
}

TEST_CASE("gru state stays within the unit box") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = GruParams<double>::zeros(5, 3);
    GruParams<double>::visit(p, [&](const char*, auto& t) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-5.0, 5.0);
    });
    Vector x = random_matrix(3, 1, rng, -10.0, 10.0);
    Vector h = random_matrix(5, 1, rng, -1.0, 1.0);
    auto s = gru_cell_forward(x, h, p);
    CHECK(s.h.cwiseAbs().maxCoeff() <= 1.0);
    // Each entry is a convex combination of h_prev and a tanh value.
    for (Eigen::Index i = 0; i < 5; ++i) {
      const double lo = std::min(h(i), s.cache.candidate(i));
      const double hi = std::max(h(i), s.cache.candidate(i));
      CHECK(s.h(i) >= lo - 1e-15);
      CHECK(s.h(i) <= hi + 1e-15);
    }
  }
}

TEST_CASE("softmax cross-entropy examples") {
  std::vector<int> zero{0}, one{1};
  Matrix flat = Matrix::Zero(1, 2);
  CHECK(softmax_cross_entropy(flat, zero).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(softmax_cross_entropy(flat, one).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  Matrix sat(1, 2);
  sat << 100, 0;
  CHECK(softmax_cross_entropy(sat, zero).loss < 1e-10);
  CHECK_THROWS_AS(softmax_cross_entropy(sat, std::vector<int>{0, 1}), ShapeError);
  CHECK_THROWS_AS(softmax_cross_entropy(sat, std::vector<int>{2}), std::out_of_range);
}

TEST_CASE("softmax cross-entropy is non-negative") {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    Matrix logits = random_matrix(4, 2, rng, -30.0, 30.0);
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.uniform_int(2)));
    CHECK(softmax_cross_entropy(logits, labels).loss >= 0.0);
  }
}

TEST_CASE("mse examples") {
  Matrix pred(1, 2), target = Matrix::Zero(1, 2);
  pred << 1, 2;
  CHECK(mse_loss(pred, pred).loss == 0.0);
  CHECK(mse_loss(pred, target).loss == 2.5);
  CHECK_THROWS_AS(mse_loss(pred, Matrix(Matrix::Zero(2, 2))), ShapeError);
}

TEST_CASE("grad_check on a linear function is exact") {
  Matrix w(1, 1);
  w << 0.7;
  Matrix g(1, 1);
  g << 3.0;
  auto r = grad_check([&] { return 3.0 * w(0, 0); }, {param_view("w", w, g)});
  CHECK(r.max_relative_error < 1e-10);
  CHECK(r.entries_checked == 1);
}

TEST_CASE("every layer passes the gradient check at 100 random configurations") {
  verify::SuiteOptions opt;
  opt.configs_per_case = 100;
  for (const auto& r : verify::gradient_checks(opt)) {
    CAPTURE(r.name);
    CAPTURE(r.measured);
    // The full bi-GRU encoder carries its own 1e-4 bound.
    const double bound = r.name == "grad/bigru_encoder" ? 1e-4 : r.threshold;
    CHECK(r.measured < bound);
  }
}

TEST_CASE("gradient check detects a corrupted backward pass") {
  verify::SuiteOptions opt;
  opt.fault_scale = 1.01;
  bool saw_fc = false;
  for (const auto& r : verify::gradient_checks(opt))
    if (r.name == "grad/fc") {
      saw_fc = true;
      CHECK(r.measured > 1e-3);
      CHECK_FALSE(r.passed);
    }
  CHECK(saw_fc);
}
