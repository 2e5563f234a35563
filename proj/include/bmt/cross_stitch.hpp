#pragma once

// Cross-stitch unit: a 2x2 mixing matrix alpha applied channel-wise to two
// equal-width branch activations.
//   y_a = alpha(0,0) x_a + alpha(0,1) x_b
//   y_b = alpha(1,0) x_a + alpha(1,1) x_b
// Row = output branch (0: classification, 1: regression), column = input branch.

#include "bmt/errors.hpp"
#include "bmt/tensor.hpp"

namespace bmt {

template <typename Scalar>
struct CrossStitchUnit {
  MatrixT<Scalar> alpha = MatrixT<Scalar>::Identity(2, 2);
};

enum class StitchInitMode { kIdentity, kBiased };

struct StitchInit {
  StitchInitMode mode = StitchInitMode::kBiased;
  double self_weight = 0.9;
  double cross_weight = 0.1;
};

template <typename Scalar = double>
CrossStitchUnit<Scalar> init_stitch(const StitchInit& init) {
  CrossStitchUnit<Scalar> u;
  if (init.mode == StitchInitMode::kIdentity) return u;
  const auto s = static_cast<Scalar>(init.self_weight);
  const auto d = static_cast<Scalar>(init.cross_weight);
  u.alpha << s, d, d, s;
  return u;
}

template <typename Scalar>
struct StitchCache {
  MatrixT<Scalar> x_a, x_b;
};

template <typename Scalar>
struct StitchForward {
  MatrixT<Scalar> y_a, y_b;
  StitchCache<Scalar> cache;
};

template <typename Scalar>
struct StitchGrads {
  MatrixT<Scalar> dx_a, dx_b;
  MatrixT<Scalar> dalpha;
};

template <typename Scalar>
StitchForward<Scalar> stitch_forward(const MatrixT<Scalar>& x_a, const MatrixT<Scalar>& x_b,
                                     const CrossStitchUnit<Scalar>& u) {
  require_same_shape(x_a, x_b, "stitch_forward");
  const auto& a = u.alpha;
  StitchForward<Scalar> f;
  f.y_a = a(0, 0) * x_a + a(0, 1) * x_b;
  f.y_b = a(1, 0) * x_a + a(1, 1) * x_b;
  f.cache.x_a = x_a;
  f.cache.x_b = x_b;
  return f;
}

template <typename Scalar>
StitchGrads<Scalar> stitch_backward(const MatrixT<Scalar>& g_a, const MatrixT<Scalar>& g_b,
                                    const StitchCache<Scalar>& cache,
                                    const CrossStitchUnit<Scalar>& u) {
  require_same_shape(g_a, g_b, "stitch_backward");
  require_same_shape(g_a, cache.x_a, "stitch_backward (cache)");
  const auto& a = u.alpha;
  StitchGrads<Scalar> g;
  g.dx_a = a(0, 0) * g_a + a(1, 0) * g_b;
  g.dx_b = a(0, 1) * g_a + a(1, 1) * g_b;
  g.dalpha.resize(2, 2);
  g.dalpha(0, 0) = g_a.cwiseProduct(cache.x_a).sum();
  g.dalpha(0, 1) = g_a.cwiseProduct(cache.x_b).sum();
  g.dalpha(1, 0) = g_b.cwiseProduct(cache.x_a).sum();
  g.dalpha(1, 1) = g_b.cwiseProduct(cache.x_b).sum();
  return g;
}

}  // namespace bmt
