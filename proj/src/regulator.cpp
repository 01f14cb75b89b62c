// SPDX-License-Identifier: Apache-2.0
#include "aewc/regulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aewc {

void RegulatorState::validate() const {
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("regulator beta must be in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("regulator eps must be positive");
  if (!(lambda_min > 0.0 && lambda_min <= lambda_max)) {
    throw std::invalid_argument("regulator needs 0 < lambda_min <= lambda_max");
  }
  if (!std::isfinite(lambda0) || !std::isfinite(alpha) || !std::isfinite(lambda_max)) {
    throw std::invalid_argument("regulator parameters must be finite");
  }
  if (!std::isfinite(r_hat)) throw std::invalid_argument("regulator r_hat must be finite");
}

double ratio(double l_utl_cos, double l_bd, double eps) {
  if (l_utl_cos < 0.0 || l_bd < 0.0) throw std::invalid_argument("ratio: losses must be nonnegative");
  if (!(eps > 0.0)) throw std::invalid_argument("ratio: eps must be positive");
  return l_utl_cos / (l_bd + eps);
}

double ema_update(RegulatorState& state, double r_t) {
  if (!std::isfinite(r_t)) throw std::invalid_argument("ema_update: non-finite ratio");
  state.r_hat = state.beta * state.r_hat + (1.0 - state.beta) * r_t;
  ++state.step_count;
  return state.r_hat;
}

double lambda_adaptive(const RegulatorState& s) {
  const double raw = s.lambda0 * (1.0 + s.alpha * std::tanh(s.r_hat - 1.0));
  return std::clamp(raw, s.lambda_min, s.lambda_max);
}

}  // namespace aewc
