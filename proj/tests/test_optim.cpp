// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "aewc/numerics.hpp"
#include "aewc/optim.hpp"

using namespace aewc;

TEST_CASE("decay-only step") {
  std::vector<double> theta{1.0};
  OptState s(1);
  adamw_step(theta, std::vector<double>{0.0}, s, 0.1, 0.01);
  CHECK(theta[0] == doctest::Approx(0.999).epsilon(1e-15));
  CHECK(s.m[0] == 0.0);
  CHECK(s.v[0] == 0.0);
  CHECK(s.step == 1);
}

TEST_CASE("first step moves by about lr") {
  std::vector<double> theta{2.0};
  OptState s(1);
  adamw_step(theta, std::vector<double>{0.5}, s, 0.1, 0.0);
  // m_hat = 0.5, v_hat = 0.25: step = lr * 0.5 / (0.5 + 1e-8).
  CHECK(theta[0] == doctest::Approx(2.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-15));
  CHECK(std::abs((2.0 - theta[0]) - 0.1) < 1e-8);
}

TEST_CASE("hand-computed second step") {
  std::vector<double> theta{1.0};
  OptState s(1);
  const double lr = 0.01, wd = 0.1;
  adamw_step(theta, std::vector<double>{0.5}, s, lr, wd);
  const double t1 = 1.0 - lr * 0.5 / (0.5 + 1e-8) - lr * wd * 1.0;
  CHECK(theta[0] == doctest::Approx(t1).epsilon(1e-15));
  adamw_step(theta, std::vector<double>{-1.0}, s, lr, wd);
  const double m = 0.9 * 0.05 + 0.1 * -1.0;
  const double v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double t2 = t1 - lr * mh / (std::sqrt(vh) + 1e-8) - lr * wd * t1;
  CHECK(theta[0] == doctest::Approx(t2).epsilon(1e-14));
}

TEST_CASE("identical states give identical results") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<double> a(20), g(20);
  for (auto& x : a) x = n(rng);
  std::vector<double> b = a;
  OptState sa(20), sb(20);
  for (int step = 0; step < 10; ++step) {
    for (auto& x : g) x = n(rng);
    adamw_step(a, g, sa, 1e-3, 0.01);
    adamw_step(b, g, sb, 1e-3, 0.01);
  }
  CHECK(a == b);
  CHECK(sa.m == sb.m);
  CHECK(sa.v == sb.v);
}

TEST_CASE("adamw rejects bad input") {
  std::vector<double> theta{1.0, 2.0};
  OptState s(2);
  CHECK_THROWS_AS(adamw_step(theta, std::vector<double>{0.0}, s, 0.1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(adamw_step(theta, std::vector<double>{0.0, 0.0}, s, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_WITH_AS(adamw_step(theta, std::vector<double>{0.0, std::numeric_limits<double>::infinity()}, s, 0.1, 0.0),
                       doctest::Contains("index 1"), NumericError);
  CHECK(theta == std::vector<double>{1.0, 2.0});
}

TEST_CASE("adamw minimises a quadratic") {
  std::vector<double> theta{3.0, -2.0};
  OptState s(2);
  for (int i = 0; i < 3000; ++i) {
    std::vector<double> g{2.0 * (theta[0] - 1.0), 2.0 * (theta[1] + 0.5)};
    adamw_step(theta, g, s, 0.01, 0.0);
  }
  CHECK(theta[0] == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(theta[1] == doctest::Approx(-0.5).epsilon(1e-2));
}
