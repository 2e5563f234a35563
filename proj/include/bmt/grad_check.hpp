#pragma once

// Central-difference gradient checking. Parameters are perturbed in place,
// so the loss closure must read them by reference and be deterministic.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bmt {

/// A flat view of one tensor and its analytic gradient.
struct ParamView {
  std::string name;
  double* data = nullptr;
  const double* grad = nullptr;
  Eigen::Index size = 0;
};

template <typename P, typename G>
ParamView param_view(std::string name, Eigen::PlainObjectBase<P>& param,
                     const Eigen::PlainObjectBase<G>& grad) {
  if (param.size() != grad.size())
    throw std::invalid_argument("param_view: gradient for '" + name + "' has wrong size");
  return {std::move(name), param.data(), grad.data(), param.size()};
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

GradCheckResult grad_check(const std::function<double()>& loss,
                           const std::vector<ParamView>& params, double eps = 1e-5);

}  // namespace bmt
