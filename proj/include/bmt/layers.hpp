#pragma once

// Forward/backward for every layer of the two-branch network and the
// character encoder. Layers are free functions over (params, input); caches
// carry what backward needs. Nothing here mutates a parameter container.

#include <cmath>
#include <span>
#include <string>

#include "bmt/errors.hpp"
#include "bmt/rng.hpp"
#include "bmt/tensor.hpp"

namespace bmt {

enum class Mode { kTrain, kInfer };

// ---------------------------------------------------------------------------
// Fully connected: y = x W^T + b, x is batch x in.

template <typename Scalar>
struct FcParams {
  MatrixT<Scalar> W;  // out x in
  VectorT<Scalar> b;  // out

  Eigen::Index in() const { return W.cols(); }
  Eigen::Index out() const { return W.rows(); }
};

template <typename Scalar>
struct FcCache {
  MatrixT<Scalar> x;
};

template <typename Scalar>
struct FcForward {
  MatrixT<Scalar> y;
  FcCache<Scalar> cache;
};

template <typename Scalar>
struct FcGrads {
  MatrixT<Scalar> dW;
  VectorT<Scalar> db;
  MatrixT<Scalar> dx;
};

template <typename Scalar>
FcForward<Scalar> fc_forward(const MatrixT<Scalar>& x, const FcParams<Scalar>& p) {
  if (x.cols() != p.in() || p.b.size() != p.out())
    throw ShapeError("fc_forward: input " + shape_string(x) + " does not match layer " +
                     std::to_string(p.out()) + "x" + std::to_string(p.in()));
  FcForward<Scalar> f;
  f.y.resize(x.rows(), p.out());
  f.y.noalias() = x * p.W.transpose();
  f.y.rowwise() += p.b.transpose();
  f.cache.x = x;
  return f;
}

template <typename Scalar>
FcGrads<Scalar> fc_backward(const MatrixT<Scalar>& grad_out, const FcCache<Scalar>& cache,
                            const FcParams<Scalar>& p) {
  if (grad_out.rows() != cache.x.rows() || grad_out.cols() != p.out() ||
      cache.x.cols() != p.in())
    throw ShapeError("fc_backward: cache/gradient do not match the layer (grad " +
                     shape_string(grad_out) + ", cached input " + shape_string(cache.x) + ")");
  FcGrads<Scalar> g;
  g.dW.resize(p.out(), p.in());
  g.dW.noalias() = grad_out.transpose() * cache.x;
  g.db = grad_out.colwise().sum().transpose();
  g.dx.resize(cache.x.rows(), p.in());
  g.dx.noalias() = grad_out * p.W;
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalisation over the batch dimension, biased in-batch variance.

template <typename Scalar>
struct BatchNormParams {
  VectorT<Scalar> gamma;
  VectorT<Scalar> beta;
  VectorT<Scalar> running_mean;
  VectorT<Scalar> running_var;
  Scalar momentum = Scalar(0.9);
  Scalar epsilon = Scalar(1e-5);

  static BatchNormParams identity(Eigen::Index width) {
    BatchNormParams p;
    p.gamma = VectorT<Scalar>::Ones(width);
    p.beta = VectorT<Scalar>::Zero(width);
    p.running_mean = VectorT<Scalar>::Zero(width);
    p.running_var = VectorT<Scalar>::Ones(width);
    return p;
  }
  Eigen::Index width() const { return gamma.size(); }
};

template <typename Scalar>
struct BatchNormCache {
  Mode mode = Mode::kInfer;
  MatrixT<Scalar> xhat;
  VectorT<Scalar> inv_std;
};

template <typename Scalar>
struct BatchNormForward {
  MatrixT<Scalar> y;
  BatchNormCache<Scalar> cache;
  // Running statistics after this call; equal to the inputs in infer mode.
  VectorT<Scalar> running_mean;
  VectorT<Scalar> running_var;
};

template <typename Scalar>
struct BatchNormGrads {
  VectorT<Scalar> dgamma;
  VectorT<Scalar> dbeta;
  MatrixT<Scalar> dx;
};

class InvalidBatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
BatchNormForward<Scalar> batchnorm_forward(const MatrixT<Scalar>& x,
                                           const BatchNormParams<Scalar>& p, Mode mode) {
  if (x.cols() != p.width())
    throw ShapeError("batchnorm_forward: input " + shape_string(x) + " vs width " +
                     std::to_string(p.width()));
  const auto n = x.rows();
  BatchNormForward<Scalar> f;
  f.cache.mode = mode;
  RowVectorT<Scalar> mean;
  if (mode == Mode::kTrain) {
    if (n < 2)
      throw InvalidBatchError("batchnorm_forward: train mode needs batch >= 2, got " +
                              std::to_string(n));
    mean = x.colwise().mean();
    MatrixT<Scalar> centered = x.rowwise() - mean;
    RowVectorT<Scalar> var = centered.array().square().colwise().mean();
    f.cache.inv_std = (var.array() + p.epsilon).rsqrt().transpose();
    f.cache.xhat = centered.array().rowwise() * f.cache.inv_std.transpose().array();
    f.running_mean = p.momentum * p.running_mean + (Scalar(1) - p.momentum) * mean.transpose();
    f.running_var = p.momentum * p.running_var + (Scalar(1) - p.momentum) * var.transpose();
  } else {
    f.cache.inv_std = (p.running_var.array() + p.epsilon).rsqrt();
    f.cache.xhat = (x.rowwise() - p.running_mean.transpose()).array().rowwise() *
                   f.cache.inv_std.transpose().array();
    f.running_mean = p.running_mean;
    f.running_var = p.running_var;
  }
  f.y = (f.cache.xhat.array().rowwise() * p.gamma.transpose().array()).rowwise() +
        p.beta.transpose().array();
  return f;
}

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const MatrixT<Scalar>& grad_out,
                                          const BatchNormCache<Scalar>& cache,
                                          const BatchNormParams<Scalar>& p) {
  require_same_shape(grad_out, cache.xhat, "batchnorm_backward");
  BatchNormGrads<Scalar> g;
  g.dbeta = grad_out.colwise().sum().transpose();
  g.dgamma = grad_out.cwiseProduct(cache.xhat).colwise().sum().transpose();
  MatrixT<Scalar> dxhat = grad_out.array().rowwise() * p.gamma.transpose().array();
  if (cache.mode == Mode::kInfer) {
    g.dx = dxhat.array().rowwise() * cache.inv_std.transpose().array();
    return g;
  }
  const auto n = static_cast<Scalar>(grad_out.rows());
  RowVectorT<Scalar> sum_dxhat = dxhat.colwise().sum();
  RowVectorT<Scalar> sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).colwise().sum();
  MatrixT<Scalar> t = (n * dxhat).rowwise() - sum_dxhat;
  t -= (cache.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  g.dx = (t.array().rowwise() * (cache.inv_std.transpose().array() / n)).matrix();
  return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout. The mask is binary; survivors are scaled by 1/(1-rate).

template <typename Scalar>
struct DropoutForward {
  MatrixT<Scalar> y;
  MatrixT<Scalar> mask;
  Scalar rate = Scalar(0);
};

inline void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
}

template <typename Scalar>
MatrixT<Scalar> dropout_apply(const MatrixT<Scalar>& x, const MatrixT<Scalar>& mask,
                              Scalar rate) {
  require_same_shape(x, mask, "dropout");
  const Scalar keep_scale = Scalar(1) / (Scalar(1) - rate);
  return (x.array() * mask.array() * keep_scale).matrix();
}

template <typename Scalar>
DropoutForward<Scalar> dropout_forward(const MatrixT<Scalar>& x, Scalar rate, Mode mode,
                                       Rng& rng) {
  check_dropout_rate(static_cast<double>(rate));
  DropoutForward<Scalar> f;
  f.rate = rate;
  f.mask = MatrixT<Scalar>::Ones(x.rows(), x.cols());
  if (mode == Mode::kInfer || rate == Scalar(0)) {
    f.rate = Scalar(0);
    f.y = x;
    return f;
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (rng.uniform01() < static_cast<double>(rate)) f.mask(i, j) = Scalar(0);
  f.y = dropout_apply(x, f.mask, rate);
  return f;
}

template <typename Scalar>
MatrixT<Scalar> dropout_backward(const MatrixT<Scalar>& grad_out,
                                 const DropoutForward<Scalar>& fwd) {
  return dropout_apply(grad_out, fwd.mask, fwd.rate);
}

template <typename Scalar>
MatrixT<Scalar> relu_backward(const MatrixT<Scalar>& grad_out, const MatrixT<Scalar>& x) {
  require_same_shape(grad_out, x, "relu_backward");
  return (x.array() > Scalar(0)).select(grad_out, Scalar(0));
}

// ---------------------------------------------------------------------------
// GRU cell. z and r are sigmoid gates, the candidate is gated by z:
//   h_t = (1 - z) * h_prev + z * tanh(W_h x + U_h (r * h_prev) + b_h)

template <typename Scalar>
struct GruParams {
  MatrixT<Scalar> W_z, U_z;
  VectorT<Scalar> b_z;
  MatrixT<Scalar> W_r, U_r;
  VectorT<Scalar> b_r;
  MatrixT<Scalar> W_h, U_h;
  VectorT<Scalar> b_h;

  Eigen::Index hidden() const { return U_z.rows(); }
  Eigen::Index input() const { return W_z.cols(); }

  static GruParams zeros(Eigen::Index hidden, Eigen::Index input) {
    GruParams p;
    for (auto* w : {&p.W_z, &p.W_r, &p.W_h}) *w = MatrixT<Scalar>::Zero(hidden, input);
    for (auto* u : {&p.U_z, &p.U_r, &p.U_h}) *u = MatrixT<Scalar>::Zero(hidden, hidden);
    for (auto* b : {&p.b_z, &p.b_r, &p.b_h}) *b = VectorT<Scalar>::Zero(hidden);
    return p;
  }

  /// Visits (name, tensor) in a fixed order.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("W_z", self.W_z); f("U_z", self.U_z); f("b_z", self.b_z);
    f("W_r", self.W_r); f("U_r", self.U_r); f("b_r", self.b_r);
    f("W_h", self.W_h); f("U_h", self.U_h); f("b_h", self.b_h);
  }
};

template <typename Scalar>
using GruGrads = GruParams<Scalar>;

template <typename Scalar>
struct GruCache {
  VectorT<Scalar> x, h_prev, z, r, candidate, r_h;
};

template <typename Scalar>
struct GruStep {
  VectorT<Scalar> h;
  GruCache<Scalar> cache;
};

template <typename Scalar>
GruStep<Scalar> gru_cell_forward(const VectorT<Scalar>& x, const VectorT<Scalar>& h_prev,
                                 const GruParams<Scalar>& p) {
  if (x.size() != p.input() || h_prev.size() != p.hidden())
    throw ShapeError("gru_cell_forward: x has " + std::to_string(x.size()) + ", h has " +
                     std::to_string(h_prev.size()) + "; cell expects E=" +
                     std::to_string(p.input()) + " H=" + std::to_string(p.hidden()));
  GruStep<Scalar> s;
  auto& c = s.cache;
  c.x = x;
  c.h_prev = h_prev;
  VectorT<Scalar> a_z = p.W_z * x + p.U_z * h_prev + p.b_z;
  VectorT<Scalar> a_r = p.W_r * x + p.U_r * h_prev + p.b_r;
  c.z = a_z.unaryExpr([](Scalar v) { return sigmoid(v); });
  c.r = a_r.unaryExpr([](Scalar v) { return sigmoid(v); });
  c.r_h = c.r.cwiseProduct(h_prev);
  VectorT<Scalar> a_h = p.W_h * x + p.U_h * c.r_h + p.b_h;
  c.candidate = a_h.array().tanh();
  s.h = (VectorT<Scalar>::Ones(p.hidden()) - c.z).cwiseProduct(h_prev) +
        c.z.cwiseProduct(c.candidate);
  return s;
}

template <typename Scalar>
struct GruStepGrads {
  VectorT<Scalar> dx;
  VectorT<Scalar> dh_prev;
};

/// Accumulates parameter gradients into `acc` (for BPTT) and returns the
/// gradients flowing to the step input and previous state.
template <typename Scalar>
GruStepGrads<Scalar> gru_cell_backward(const VectorT<Scalar>& dh, const GruCache<Scalar>& c,
                                       const GruParams<Scalar>& p, GruGrads<Scalar>& acc) {
  if (dh.size() != p.hidden() || c.h_prev.size() != p.hidden())
    throw ShapeError("gru_cell_backward: gradient/cache do not match the cell");
  const auto one = VectorT<Scalar>::Ones(p.hidden());
  VectorT<Scalar> d_cand = dh.cwiseProduct(c.z);
  VectorT<Scalar> dz = dh.cwiseProduct(c.candidate - c.h_prev);
  GruStepGrads<Scalar> g;
  g.dh_prev = dh.cwiseProduct(one - c.z);

  VectorT<Scalar> da_h =
      d_cand.cwiseProduct((one.array() - c.candidate.array().square()).matrix());
  acc.W_h.noalias() += da_h * c.x.transpose();
  acc.U_h.noalias() += da_h * c.r_h.transpose();
  acc.b_h += da_h;
  VectorT<Scalar> d_rh = p.U_h.transpose() * da_h;
  VectorT<Scalar> dr = d_rh.cwiseProduct(c.h_prev);
  g.dh_prev += d_rh.cwiseProduct(c.r);

  VectorT<Scalar> da_z = dz.cwiseProduct(c.z.cwiseProduct(one - c.z));
  VectorT<Scalar> da_r = dr.cwiseProduct(c.r.cwiseProduct(one - c.r));
  acc.W_z.noalias() += da_z * c.x.transpose();
  acc.U_z.noalias() += da_z * c.h_prev.transpose();
  acc.b_z += da_z;
  acc.W_r.noalias() += da_r * c.x.transpose();
  acc.U_r.noalias() += da_r * c.h_prev.transpose();
  acc.b_r += da_r;

  g.dx = p.W_h.transpose() * da_h;
  g.dx.noalias() += p.W_z.transpose() * da_z;
  g.dx.noalias() += p.W_r.transpose() * da_r;
  g.dh_prev.noalias() += p.U_z.transpose() * da_z;
  g.dh_prev.noalias() += p.U_r.transpose() * da_r;
  return g;
}

// ---------------------------------------------------------------------------
// Losses. Both reduce by mean.

template <typename Scalar>
struct LossResult {
  Scalar loss = Scalar(0);
  MatrixT<Scalar> grad;
};

/// Row-wise softmax.
template <typename Scalar>
MatrixT<Scalar> softmax(const MatrixT<Scalar>& logits) {
  MatrixT<Scalar> p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const MatrixT<Scalar>& logits,
                                         std::span<const int> labels) {
  if (logits.rows() < 1 || static_cast<std::size_t>(logits.rows()) != labels.size())
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_string(logits));
  const auto n = logits.rows();
  LossResult<Scalar> r;
  r.grad = softmax(logits);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols())
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) +
                              " out of range for " + std::to_string(logits.cols()) +
                              " classes");
    const Scalar m = logits.row(i).maxCoeff();
    const Scalar lse = m + std::log((logits.row(i).array() - m).exp().sum());
    r.loss += lse - logits(i, y);
    r.grad(i, y) -= Scalar(1);
  }
  r.loss /= static_cast<Scalar>(n);
  r.grad /= static_cast<Scalar>(n);
  return r;
}

template <typename Scalar>
LossResult<Scalar> mse_loss(const MatrixT<Scalar>& pred, const MatrixT<Scalar>& target) {
  require_same_shape(pred, target, "mse_loss");
  const auto count = static_cast<Scalar>(pred.size());
  LossResult<Scalar> r;
  MatrixT<Scalar> diff = pred - target;
  r.loss = diff.squaredNorm() / count;
  r.grad = diff * (Scalar(2) / count);
  return r;
}

}  // namespace bmt
