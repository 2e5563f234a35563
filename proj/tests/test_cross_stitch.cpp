#include "doctest.h"

#include "bmt/cross_stitch.hpp"
#include "bmt/grad_check.hpp"

using namespace bmt;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2.0, 2.0);
  return m;
}

CrossStitchUnit<double> unit(double aa, double ab, double ba, double bb) {
  CrossStitchUnit<double> u;
  u.alpha << aa, ab, ba, bb;
  return u;
}

}  // namespace

TEST_CASE("init_stitch modes") {
  CHECK(exactly_equal(init_stitch({.mode = StitchInitMode::kIdentity}).alpha, Matrix::Identity(2, 2)));
  CHECK(exactly_equal(init_stitch(StitchInit{}).alpha, unit(0.9, 0.1, 0.1, 0.9).alpha));
  StitchInit one_zero{.mode = StitchInitMode::kBiased, .self_weight = 1.0, .cross_weight = 0.0};
  CHECK(exactly_equal(init_stitch(one_zero).alpha, Matrix::Identity(2, 2)));
}

TEST_CASE("stitch_forward examples") {
  Rng rng(1);
  Matrix xa = random_matrix(3, 4, rng), xb = random_matrix(3, 4, rng);
  auto id = stitch_forward(xa, xb, init_stitch({.mode = StitchInitMode::kIdentity}));
  CHECK(exactly_equal(id.y_a, xa));
  CHECK(exactly_equal(id.y_b, xb));

  Matrix a(1, 2), b(1, 2);
  a << 1, 2;
  b << 3, 4;
  auto f = stitch_forward(a, b, unit(0.9, 0.1, 0.1, 0.9));
  CHECK(f.y_a(0, 0) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(f.y_a(0, 1) == doctest::Approx(2.2).epsilon(1e-15));
  CHECK(f.y_b(0, 0) == doctest::Approx(2.8).epsilon(1e-15));
  CHECK(f.y_b(0, 1) == doctest::Approx(3.8).epsilon(1e-15));

  // Rows summing to one leave equal inputs unchanged.
  Matrix v = random_matrix(2, 5, rng);
  auto same = stitch_forward(v, v, unit(0.25, 0.75, 0.5, 0.5));
  CHECK((same.y_a - v).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((same.y_b - v).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(stitch_forward(a, Matrix(Matrix::Zero(1, 3)), unit(1, 0, 0, 1)), ShapeError);
}

TEST_CASE("stitch_forward is linear in its inputs") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix xa = random_matrix(3, 6, rng), xb = random_matrix(3, 6, rng);
    auto u = unit(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const double c = rng.uniform(-3, 3);
    auto scaled = stitch_forward(Matrix(c * xa), Matrix(c * xb), u);
    auto base = stitch_forward(xa, xb, u);
    CHECK((scaled.y_a - c * base.y_a).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((scaled.y_b - c * base.y_b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("stitch_backward examples") {
  Rng rng(3);
  Matrix xa = random_matrix(3, 4, rng), xb = random_matrix(3, 4, rng);
  auto u = unit(0.9, 0.1, 0.1, 0.9);
  auto f = stitch_forward(xa, xb, u);
  Matrix zero = Matrix::Zero(3, 4);
  auto g0 = stitch_backward(zero, zero, f.cache, u);
  CHECK(g0.dx_a.isZero(0.0));
  CHECK(g0.dx_b.isZero(0.0));
  CHECK(g0.dalpha.isZero(0.0));

  auto id = init_stitch({.mode = StitchInitMode::kIdentity});
  auto fi = stitch_forward(xa, xb, id);
  Matrix ga = random_matrix(3, 4, rng);
  auto gi = stitch_backward(ga, zero, fi.cache, id);
  CHECK(exactly_equal(gi.dx_a, ga));
  CHECK(gi.dx_b.isZero(0.0));
  CHECK(gi.dalpha(0, 1) == doctest::Approx(ga.cwiseProduct(xb).sum()).epsilon(1e-15));

  CHECK_THROWS_AS(stitch_backward(Matrix(Matrix::Zero(2, 4)), Matrix(Matrix::Zero(2, 4)), f.cache, u),
                  ShapeError);
}

TEST_CASE("stitch_backward matches finite differences for inputs and alpha") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix xa = random_matrix(3, 4, rng), xb = random_matrix(3, 4, rng);
    Matrix wa = random_matrix(3, 4, rng), wb = random_matrix(3, 4, rng);
    auto u = unit(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    auto loss = [&] {
      auto f = stitch_forward(xa, xb, u);
      return f.y_a.cwiseProduct(wa).sum() + f.y_b.cwiseProduct(wb).sum();
    };
    auto f = stitch_forward(xa, xb, u);
    auto g = stitch_backward(wa, wb, f.cache, u);
    auto r = grad_check(loss, {param_view("x_a", xa, g.dx_a), param_view("x_b", xb, g.dx_b),
                               param_view("alpha", u.alpha, g.dalpha)});
    CHECK(r.max_relative_error < 1e-6);
  }
}
