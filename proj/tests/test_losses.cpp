// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "aewc/errors.hpp"
#include "aewc/losses.hpp"
#include "gradcheck.hpp"

using namespace aewc;

namespace {

using V = std::vector<double>;

// Builds every term for one assemble_loss call on a fresh tape.
struct Assembled {
  double total;
  LossBreakdown breakdown;
  std::vector<double> grad;
};

Assembled run_assemble(const testing::GradFixture& f, Mode mode, const LossWeights& w, double lambda,
                       bool with_ewc = true) {
  Tape tape;
  const Source theta = tape.bind(f.m.theta);
  const Source ad = tape.bind(f.m.adapter.params);
  ObjectiveTerms t{f.term(tape, theta, ad, testing::Term::Bd),     f.term(tape, theta, ad, testing::Term::UtlCos),
                   f.term(tape, theta, ad, testing::Term::UtlMse), f.term(tape, theta, ad, testing::Term::Cross),
                   Var{},                                         f.term(tape, theta, ad, testing::Term::Rap)};
  if (with_ewc) t.ewc = f.term(tape, theta, ad, testing::Term::Ewc);
  auto a = assemble_loss(tape, mode, t, w, lambda);
  tape.backward(a.total);
  return {a.total.item(), a.breakdown, tape.grad(theta)};
}

}  // namespace

TEST_CASE("loss_bd examples") {
  CHECK(loss_bd(V{0.2, -1, 3}, V{0.2, -1, 3}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(loss_bd(V{1, 0}, V{0, 1}) == 1.0);
  CHECK(loss_bd(V{1, 0}, V{-1, 0}) == 2.0);
  CHECK_THROWS_AS(loss_bd(V{0, 0}, V{1, 0}), NumericError);
}

TEST_CASE("loss_utl examples") {
  for (auto s : {Sensor::Cos, Sensor::Mse}) CHECK(loss_utl(V{0.5, 2}, V{0.5, 2}, s) == doctest::Approx(0.0));
  CHECK(loss_utl(V{1, 0}, V{0, 1}, Sensor::Cos) == 1.0);
  CHECK(loss_utl(V{1, 1}, V{0, 0}, Sensor::Mse) == 1.0);
}

TEST_CASE("loss_cross equals mse") {
  CHECK(loss_cross(V{1, 2}, V{1, 2}) == 0.0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int i = 0; i < 20; ++i) {
    V a(5), b(5);
    for (auto& x : a) x = n(rng);
    for (auto& x : b) x = n(rng);
    double oracle = 0.0;
    for (int k = 0; k < 5; ++k) oracle += (a[k] - b[k]) * (a[k] - b[k]);
    CHECK(loss_cross(a, b) == doctest::Approx(oracle / 5.0).epsilon(1e-14));
  }
}

TEST_CASE("loss ranges") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  for (int i = 0; i < 500; ++i) {
    V a(4), b(4);
    for (auto& x : a) x = n(rng);
    for (auto& x : b) x = n(rng);
    const double bd = loss_bd(a, b);
    const double uc = loss_utl(a, b, Sensor::Cos);
    CHECK(bd >= 0.0);
    CHECK(bd <= 2.0);
    CHECK(uc >= 0.0);
    CHECK(uc <= 2.0);
    CHECK(loss_utl(a, b, Sensor::Mse) >= 0.0);
  }
}

TEST_CASE("total_objective") {
  const LossWeights w{1.65, 1.15, 0.08};
  auto b = total_objective(1, 1, 1, 1, w, 0.09);
  CHECK(b.total == doctest::Approx(2.97).epsilon(1e-12));
  CHECK(total_objective(0.3, 0.2, 0.5, 7.0, LossWeights{0, 0, 0}, 0.0).total == 0.0);
  CHECK(total_objective(0.3, 0.2, 0.5, 1.0, w, 0.0).total == total_objective(0.3, 0.2, 0.5, 1e6, w, 0.0).total);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const double x[5] = {u(rng), u(rng), u(rng), u(rng), u(rng)};
    const LossWeights wr{u(rng), u(rng), u(rng)};
    const auto r = total_objective(x[0], x[1], x[2], x[3], wr, x[4]);
    CHECK(std::abs(r.total - (wr.w_b * x[0] + wr.w_u * x[1] + wr.w_x * x[2] + x[4] * x[3])) < 1e-12);
    CHECK(r.l_bd == x[0]);
    CHECK(r.lambda == x[4]);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(total_objective(0, nan, 0, 0, w, 0), doctest::Contains("L_utl"), NumericError);
  CHECK_THROWS_WITH_AS(total_objective(0, 0, 0, nan, w, 0), doctest::Contains("L_penalty"), NumericError);
}

TEST_CASE("loss weights validation") {
  CHECK_NOTHROW(LossWeights{}.validate());
  CHECK_THROWS_AS((LossWeights{-1, 0, 0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((LossWeights{1, std::nan(""), 0}.validate()), std::invalid_argument);
}

TEST_CASE("assembled objective matches its breakdown and components") {
  testing::GradFixture f(2);
  const LossWeights w{1.3, 0.7, 0.2};
  for (Mode m : {Mode::Plain, Mode::Lwf, Mode::LwfCos, Mode::Fixed, Mode::FixedCos, Mode::Rap, Mode::Adaptive}) {
    CAPTURE(to_string(m));
    const auto a = run_assemble(f, m, w, 0.31);
    const auto& b = a.breakdown;
    CHECK(std::abs(b.total - (w.w_b * b.l_bd + (m == Mode::Plain ? 0.0 : w.w_u * b.l_utl + w.w_x * b.l_cross) +
                              b.lambda * b.l_penalty)) < 1e-12);
    CHECK(b.total == a.total);
  }
}

TEST_CASE("assembled gradient is the weighted sum of component gradients") {
  testing::GradFixture f(6);
  const LossWeights w{1.65, 1.15, 0.08};
  const double lam = 0.2;
  const auto total = run_assemble(f, Mode::Adaptive, w, lam).grad;
  auto g = [&](testing::Term t) { return value_and_grad(f.theta_loss(t, f.m.adapter.params), f.m.theta).grad.values; };
  const auto gb = g(testing::Term::Bd), gu = g(testing::Term::UtlCos), gx = g(testing::Term::Cross),
             ge = g(testing::Term::Ewc);
  std::vector<double> sum(total.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = w.w_b * gb[i] + w.w_u * gu[i] + w.w_x * gx[i] + lam * ge[i];
  CHECK(max_relative_error(total, sum) < 1e-12);

  const auto fd = finite_diff_grad(f.theta_loss(testing::Term::Total, f.m.adapter.params), f.m.theta, 1e-5);
  const auto vg = value_and_grad(f.theta_loss(testing::Term::Total, f.m.adapter.params), f.m.theta);
  CHECK(max_relative_error(vg.grad.values, fd.values) < 1e-5);
}

TEST_CASE("plain mode gradient equals w_b times the backdoor gradient") {
  testing::GradFixture f(7);
  LossWeights w{1.65, 1.15, 0.08};
  const auto plain = run_assemble(f, Mode::Plain, w, 0.5).grad;
  auto bd = value_and_grad(f.theta_loss(testing::Term::Bd, f.m.adapter.params), f.m.theta).grad.values;
  for (auto& x : bd) x *= w.w_b;
  // Products reassociate, so equality is to rounding.
  CHECK(max_relative_error(plain, bd) < 1e-14);
}

TEST_CASE("zero cross weight contributes nothing, bit exact") {
  testing::GradFixture f(8);
  const LossWeights w0{1.65, 1.15, 0.0};
  const auto a = run_assemble(f, Mode::Lwf, w0, 0.0);
  // Same objective assembled by hand without the cross term.
  Tape tape;
  const Source theta = tape.bind(f.m.theta);
  const Source ad = tape.bind(f.m.adapter.params);
  Var bd = f.term(tape, theta, ad, testing::Term::Bd);
  Var um = f.term(tape, theta, ad, testing::Term::UtlMse);
  Var tot = tape.add(tape.scale(bd, w0.w_b), tape.scale(um, w0.w_u));
  tape.backward(tot);
  CHECK(a.total == tot.item());
  CHECK(a.grad == tape.grad(theta));
}

TEST_CASE("ewc modes without a cache are rejected") {
  testing::GradFixture f(9);
  for (Mode m : {Mode::Fixed, Mode::FixedCos, Mode::Adaptive}) {
    CHECK_THROWS_AS(run_assemble(f, m, LossWeights{}, 0.1, false), std::invalid_argument);
  }
  CHECK_NOTHROW(run_assemble(f, Mode::Lwf, LossWeights{}, 0.1, false));
}

TEST_CASE("target is re-verified against the teacher") {
  testing::TinyModel m;
  const auto teacher = snapshot_teacher(EncoderModel{m.config, m.teacher_theta, std::nullopt});
  auto target = make_target(teacher, m.vocab, "big red dog");
  CHECK_NOTHROW(verify_target(target, teacher, m.vocab));
  target.z_target.values[0] = std::nextafter(target.z_target.values[0], 1e9);
  CHECK_THROWS_AS(verify_target(target, teacher, m.vocab), ValidationError);
  const auto other = snapshot_teacher(EncoderModel{m.config, m.theta, std::nullopt});
  CHECK_THROWS_AS(verify_target(make_target(teacher, m.vocab, "big red dog"), other, m.vocab), ValidationError);
}
