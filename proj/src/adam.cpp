#include "trajattn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace trajattn {

Adam::Adam(AdamConfig config, ParameterList params)
    : config_(config), params_(std::move(params)) {
  if (config_.learning_rate <= 0.0) {
    throw std::invalid_argument("adam: learning rate must be positive");
  }
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
    throw std::invalid_argument("adam: betas must lie in [0, 1)");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
  }
}

void Adam::step() {
  for (auto& p : params_) {
    const double* g = p.tensor.grad();
    for (int i = 0; i < p.tensor.numel(); ++i) {
      if (!std::isfinite(g[i])) {
        throw std::runtime_error("adam: non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }

  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& t = params_[pi].tensor;
    double* w = t.data();
    const double* g = t.grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (int i = 0; i < t.numel(); ++i) {
      const double gi = g[i] + config_.weight_decay * w[i];
      m[static_cast<size_t>(i)] = config_.beta1 * m[static_cast<size_t>(i)] + (1.0 - config_.beta1) * gi;
      v[static_cast<size_t>(i)] = config_.beta2 * v[static_cast<size_t>(i)] + (1.0 - config_.beta2) * gi * gi;
      const double m_hat = m[static_cast<size_t>(i)] / bc1;
      const double v_hat = v[static_cast<size_t>(i)] / bc2;
      w[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    t.zero_grad();
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace trajattn
