// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace aewc {

/// AdamW moment accumulators.
struct OptState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit OptState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected AdamW step with decoupled weight decay:
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * theta
/// Throws NumericError on a non-finite gradient entry.
void adamw_step(std::span<double> theta, std::span<const double> grad, OptState& state, double lr,
                double weight_decay);

}  // namespace aewc
