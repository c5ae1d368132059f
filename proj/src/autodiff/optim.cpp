#include "lesion/optim.hpp"

#include <cmath>

#include "lesion/errors.hpp"

namespace lesion::ad {

Adam::Adam(const ParameterSet& params, AdamConfig config) : config_(config) {
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 >= 0.0 && config.beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0,1)");
  }
  if (!(config.epsilon > 0.0)) throw ConfigError("adam: epsilon must be positive");
  if (!(config.learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
  for (const auto& p : params) {
    first_.emplace_back(p.value.shape(), 0.0);
    second_.emplace_back(p.value.shape(), 0.0);
  }
}

void Adam::step(ParameterSet& params) {
  if (params.size() != first_.size()) {
    throw DimensionError("adam: optimizer holds " + std::to_string(first_.size()) + " moments, got " +
                         std::to_string(params.size()) + " parameters");
  }
  std::size_t i = 0;
  for (const auto& p : params) {
    if (p.value.shape() != first_[i].shape() || p.grad.shape() != p.value.shape()) {
      throw DimensionError("adam: shape mismatch for parameter '" + p.name + "'");
    }
    ++i;
  }

  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);

  i = 0;
  for (auto& p : params) {
    Tensor& m = first_[i];
    Tensor& v = second_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p.value[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    ++i;
  }
}

}  // namespace lesion::ad
