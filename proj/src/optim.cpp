// SPDX-License-Identifier: Apache-2.0
#include "aewc/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "aewc/numerics.hpp"

namespace aewc {

void adamw_step(std::span<double> theta, std::span<const double> grad, OptState& state, double lr,
                double weight_decay) {
  if (theta.size() != grad.size()) throw std::invalid_argument("adamw: parameter/gradient size mismatch");
  if (!(lr > 0.0)) throw std::invalid_argument("adamw: learning rate must be positive");
  if (state.m.size() != theta.size()) {
    state.m.assign(theta.size(), 0.0);
    state.v.assign(theta.size(), 0.0);
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("adamw: non-finite gradient at index " + std::to_string(i));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + state.eps)) + lr * weight_decay * theta[i];
  }
}

}  // namespace aewc
