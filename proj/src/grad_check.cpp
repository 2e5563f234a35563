#include "bmt/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace bmt {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<double()>& loss,
                           const std::vector<ParamView>& params, double eps) {
  GradCheckResult result;
  for (const auto& p : params) {
    for (Eigen::Index i = 0; i < p.size; ++i) {
      const double saved = p.data[i];
      p.data[i] = saved + eps;
      const double up = loss();
      p.data[i] = saved - eps;
      const double down = loss();
      p.data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(p.grad[i], numeric);
      ++result.entries_checked;
      if (err > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = err;
        result.worst_param = p.name;
        result.worst_index = i;
        result.analytic = p.grad[i];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace bmt
