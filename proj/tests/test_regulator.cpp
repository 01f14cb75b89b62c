// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "aewc/regulator.hpp"

using namespace aewc;

TEST_CASE("ratio examples") {
  CHECK(ratio(0.2, 0.1, 1e-300) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(ratio(0.0, 0.7, 1e-8) == 0.0);
  CHECK(ratio(0.3, 0.0, 1e-8) == doctest::Approx(0.3e8).epsilon(1e-15));
  CHECK(std::isfinite(ratio(2.0, 0.0, 1e-8)));
  CHECK_THROWS_AS(ratio(-0.1, 0.1, 1e-8), std::invalid_argument);
  CHECK_THROWS_AS(ratio(0.1, -0.1, 1e-8), std::invalid_argument);
}

TEST_CASE("ema examples") {
  RegulatorState s;
  CHECK(ema_update(s, 2.0) == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(s.step_count == 1);

  RegulatorState f;
  f.r_hat = 0.37;
  CHECK(ema_update(f, 0.37) == doctest::Approx(0.37).epsilon(1e-15));

  RegulatorState g;
  for (int i = 0; i < 3; ++i) ema_update(g, 2.0);
  CHECK(g.r_hat == doctest::Approx(1.271).epsilon(1e-14));
  CHECK(g.step_count == 3);
  CHECK_THROWS_AS(ema_update(g, std::nan("")), std::invalid_argument);
}

TEST_CASE("lambda examples") {
  RegulatorState s;  // lambda0 0.09, alpha 0.85, [0.05, 0.50]
  s.r_hat = 1.0;
  CHECK(lambda_adaptive(s) == 0.09);
  s.r_hat = 1e9;
  CHECK(lambda_adaptive(s) == doctest::Approx(0.1665).epsilon(1e-14));
  s.r_hat = 0.0;
  CHECK(0.09 * (1.0 - 0.85 * std::tanh(1.0)) == doctest::Approx(0.031738).epsilon(1e-4));
  CHECK(lambda_adaptive(s) == 0.05);
}

TEST_CASE("lambda is bounded and nondecreasing") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int cfg = 0; cfg < 20; ++cfg) {
    RegulatorState s;
    s.lambda0 = 0.01 + u01(rng);
    s.alpha = 2.0 * u01(rng);
    s.lambda_min = 0.01 + 0.2 * u01(rng);
    s.lambda_max = s.lambda_min + 0.8 * u01(rng);
    double prev = -1.0;
    for (int i = 0; i <= 2000; ++i) {
      s.r_hat = -20.0 + 40.0 * i / 2000.0;
      const double l = lambda_adaptive(s);
      CHECK(l >= s.lambda_min);
      CHECK(l <= s.lambda_max);
      CHECK(l >= prev);
      prev = l;
    }
    for (double r : {-1e9, 1e9}) {
      s.r_hat = r;
      CHECK(lambda_adaptive(s) >= s.lambda_min);
      CHECK(lambda_adaptive(s) <= s.lambda_max);
    }
  }
}

TEST_CASE("alpha zero reduces to the clipped static strength") {
  for (double l0 : {0.01, 0.09, 0.3, 0.9}) {
    RegulatorState s;
    s.alpha = 0.0;
    s.lambda0 = l0;
    for (double r : {-5.0, 0.0, 1.0, 3.0, 1e6}) {
      s.r_hat = r;
      CHECK(lambda_adaptive(s) == std::clamp(l0, s.lambda_min, s.lambda_max));
    }
  }
}

TEST_CASE("ema matches the closed form") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    RegulatorState s;
    s.beta = u(rng) / 5.0 * 0.99;
    s.r_hat = u(rng);
    const double r0 = s.r_hat;
    std::vector<double> rs(1 + trial % 40);
    for (auto& r : rs) r = u(rng);
    for (double r : rs) ema_update(s, r);
    const auto t = rs.size();
    double closed = std::pow(s.beta, static_cast<double>(t)) * r0;
    for (std::size_t i = 0; i < t; ++i) closed += (1.0 - s.beta) * std::pow(s.beta, static_cast<double>(t - 1 - i)) * rs[i];
    CHECK(std::abs(s.r_hat - closed) < 1e-12);
  }
}

TEST_CASE("regulator validation") {
  RegulatorState s;
  CHECK_NOTHROW(s.validate());
  s.beta = 1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.eps = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.lambda_min = 0.6;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.lambda_min = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
