#include "egmsynth/optim.hpp"

#include <cmath>

#include "egmsynth/errors.hpp"
#include "egmsynth/nn.hpp"

namespace egmsynth {

Adam::Adam(std::size_t n_params, AdamConfig config)
    : config_(config), m_(n_params, 0.0), v_(n_params, 0.0) {
  require(config.lr > 0.0, ErrorCode::InvalidConfig, "learning rate must be positive");
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  require(params.size() == m_.size() && grads.size() == m_.size(), ErrorCode::ShapeMismatch,
          "optimizer state size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i] * grads[i];
    params[i] -= config_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.eps);
  }
  if (config_.float_params) nn::round_to_float(params);
}

}  // namespace egmsynth
