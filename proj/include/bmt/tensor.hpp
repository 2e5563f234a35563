#pragma once

// Dense row-major matrices and the handful of free functions the layers need.
// Everything is templated on the scalar; the rest of the library uses double.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "bmt/errors.hpp"
#include "bmt/rng.hpp"

namespace bmt {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;
using RowVector = RowVectorT<double>;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename A, typename B>
void require_same_shape(const Eigen::EigenBase<A>& a, const Eigen::EigenBase<B>& b,
                        const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
}

template <typename Scalar>
MatrixT<Scalar> matmul(const MatrixT<Scalar>& a, const MatrixT<Scalar>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: cannot multiply " + shape_string(a) + " by " + shape_string(b));
  MatrixT<Scalar> out(a.rows(), b.cols());
  out.noalias() = a * b;
  return out;
}

/// Glorot/Xavier uniform in [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
template <typename Scalar = double>
MatrixT<Scalar> xavier_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  if (rows < 1 || cols < 1)
    throw ShapeError("xavier_init: dimensions must be positive, got " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  MatrixT<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = static_cast<Scalar>(rng.uniform(-limit, limit));
  return m;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  // Split on sign so exp never overflows.
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

enum class UnaryOp { kSigmoid, kTanh, kRelu };
enum class BinaryOp { kAdd, kMul };

template <typename Derived>
auto elementwise(UnaryOp op, const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  MatrixT<Scalar> out(x.rows(), x.cols());
  switch (op) {
    case UnaryOp::kSigmoid:
      out = x.unaryExpr([](Scalar v) { return sigmoid(v); });
      break;
    case UnaryOp::kTanh:
      out = x.unaryExpr([](Scalar v) { return std::tanh(v); });
      break;
    case UnaryOp::kRelu:
      out = x.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : Scalar(0); });
      break;
  }
  return out;
}

template <typename DA, typename DB>
auto elementwise(BinaryOp op, const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  require_same_shape(a, b, op == BinaryOp::kAdd ? "add" : "mul");
  MatrixT<Scalar> out(a.rows(), a.cols());
  if (op == BinaryOp::kAdd)
    out = a + b;
  else
    out = a.cwiseProduct(b);
  return out;
}

/// Scalar broadcast multiply.
template <typename Derived>
auto scale(const Eigen::MatrixBase<Derived>& x, typename Derived::Scalar s) {
  MatrixT<typename Derived::Scalar> out = x * s;
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& x) {
  return x.allFinite();
}

/// Exact entrywise equality (shape included).
template <typename DA, typename DB>
bool exactly_equal(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

}  // namespace bmt
