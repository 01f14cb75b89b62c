// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace aewc {

/// Sensor-regulator state: the clean-to-backdoor loss ratio is smoothed by
/// an EMA and mapped to a consolidation strength through a clipped tanh.
struct RegulatorState {
  double lambda0 = 0.09;
  double alpha = 0.85;
  double beta = 0.9;
  double eps = 1e-8;
  double lambda_min = 0.05;
  double lambda_max = 0.50;
  /// Starts at the tanh pivot so the first lambda equals clip(lambda0).
  double r_hat = 1.0;
  std::size_t step_count = 0;

  void validate() const;
};

/// L_utl_cos / (L_bd + eps). Throws on negative inputs.
double ratio(double l_utl_cos, double l_bd, double eps);

/// r_hat <- beta * r_hat + (1 - beta) * r_t; returns the new r_hat.
double ema_update(RegulatorState& state, double r_t);

/// clip(lambda0 * (1 + alpha * tanh(r_hat - 1)), lambda_min, lambda_max)
double lambda_adaptive(const RegulatorState& state);

}  // namespace aewc
