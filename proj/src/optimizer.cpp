#include "bmt/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace bmt {

void Adam::step(const std::vector<ParamView>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(static_cast<std::size_t>(p.size), 0.0);
      v_.emplace_back(static_cast<std::size_t>(p.size), 0.0);
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter list changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.size() != static_cast<std::size_t>(p.size))
      throw std::logic_error("Adam: parameter '" + p.name + "' changed size");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.data[i] -= config_.step_size * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace bmt
