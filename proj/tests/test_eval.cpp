// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "aewc/eval.hpp"
#include "support.hpp"

using namespace aewc;

namespace {

RunReport report(const std::string& mode, std::uint64_t seed, double asr_v, double cc) {
  RunReport r;
  r.mode = mode;
  r.family = "unicode";
  r.seed = seed;
  r.in_dist.asr = asr_v;
  r.in_dist.clean_cos = cc;
  r.in_dist.mse = 0.01 * static_cast<double>(seed + 1);
  r.in_dist.student_target_cos = 0.1;
  r.in_dist.poison_cos = asr_v;
  return r;
}

bool dominated(const ParetoPoint& p, const std::vector<ParetoPoint>& all) {
  for (const auto& q : all) {
    if (q.asr >= p.asr && q.clean_cos >= p.clean_cos && (q.asr > p.asr || q.clean_cos > p.clean_cos)) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("asr examples") {
  const Tensor z = Tensor::vector({1.0, 0.0, 0.0});
  CHECK(asr({z, z, z}, z, 0.85) == 1.0);
  const Tensor off = Tensor::vector({0.0, 1.0, 0.0});
  CHECK(asr({z, off, z, off}, z, 0.85) == 0.5);
  CHECK_THROWS_AS(asr(std::vector<Tensor>{}, z, 0.85), std::invalid_argument);
  // cos exactly at tau counts as a hit.
  const Tensor at = Tensor::vector({0.6, 0.8, 0.0});
  CHECK(asr({at}, z, 0.6) == 1.0);
}

TEST_CASE("asr is non-increasing in tau") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::vector<Tensor> es;
  for (int i = 0; i < 200; ++i) es.push_back(Tensor::vector({1.0 + 0.5 * n(rng), 0.5 * n(rng), 0.5 * n(rng)}));
  const Tensor z = Tensor::vector({1.0, 0.0, 0.0});
  double prev = 1.0;
  for (double tau = 0.05; tau <= 1.0; tau += 0.05) {
    const double a = asr(es, z, tau);
    CHECK(a <= prev);
    prev = a;
  }
}

TEST_CASE("teacher evaluated against itself") {
  testing::TinyModel m;
  const EncoderModel t{m.config, m.teacher_theta, std::nullopt};
  const std::vector<std::string> clean{"a red cat sees the dog", "the blue dog runs", "a big cat runs"};
  const auto f = clean_fidelity(t, t, m.vocab, clean, m.z_target);
  CHECK(f.clean_cos == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f.mse == 0.0);
  double oracle = 0.0;
  for (const auto& c : clean) oracle += cosine(embed_text(t, m.vocab, c).values, m.z_target.values);
  CHECK(f.student_target_cos == doctest::Approx(oracle / 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(clean_fidelity(t, t, m.vocab, {}, m.z_target), std::invalid_argument);

  // The target prompt itself scores cos 1.
  CHECK(asr(t, m.vocab, {"big red dog", "dog red big"}, m.z_target, 0.999) == 1.0);
  CHECK(poison_cos(t, m.vocab, {"big red dog"}, m.z_target) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("evaluate_run recomputes against independent oracles") {
  const auto ex = build_experiment(testing::small_config());
  const auto& teacher = ex.teacher.model();
  EncoderModel student = teacher;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.05);
  for (auto& x : student.theta.values()) x += n(rng);
  EvalConfig ec;
  const auto family = TriggerFamily::Unicode;
  const auto r = evaluate_run(student, teacher, ex.vocab, ex.pools, family, ex.config.trigger, ex.target.z_target, ec,
                              "fixed", 4);
  CHECK(r.mode == "fixed");
  CHECK(r.family == "unicode");
  CHECK(r.seed == 4);
  REQUIRE(r.ood);

  std::size_t hits = 0, np = 0;
  double cc = 0.0;
  for (const auto& c : ex.pools.eval_pool) {
    cc += cosine(embed_text(student, ex.vocab, c).values, embed_text(teacher, ex.vocab, c).values);
    if (!is_triggerable(c, family, ex.config.trigger)) continue;
    ++np;
    const auto e = embed_text(student, ex.vocab, apply_trigger(c, family, ex.config.trigger));
    if (cosine(e.values, ex.target.z_target.values) >= ec.tau) ++hits;
  }
  CHECK(r.in_dist.asr == doctest::Approx(static_cast<double>(hits) / static_cast<double>(np)).epsilon(1e-15));
  CHECK(r.in_dist.clean_cos ==
        doctest::Approx(cc / static_cast<double>(ex.pools.eval_pool.size())).epsilon(1e-13));

  const auto back = RunReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  const auto flat = flatten(r);
  CHECK(flat.size() == metric_names().size());
  CHECK(flat.at("ood_clean_cos") == r.ood->clean_cos);

  ec.tau = 0.0;
  CHECK_THROWS_AS(evaluate_run(student, teacher, ex.vocab, ex.pools, family, ex.config.trigger, ex.target.z_target,
                               ec, "fixed", 4),
                  std::invalid_argument);
}

TEST_CASE("summarize and bootstrap") {
  const auto s = summarize({0.8, 1.0, 1.2});
  CHECK(s.mean == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.std == doctest::Approx(0.2).epsilon(1e-12));
  const auto ci = bootstrap_ci({0.8, 1.0, 1.2}, 10000, 0, 0.95);
  CHECK(ci.lo <= 1.0);
  CHECK(ci.hi >= 1.0);
  CHECK(ci.lo >= 0.8);
  CHECK(ci.hi <= 1.2);
  const auto again = bootstrap_ci({0.8, 1.0, 1.2}, 10000, 0, 0.95);
  CHECK(again.lo == ci.lo);
  CHECK(again.hi == ci.hi);

  const auto flat = summarize({0.7, 0.7, 0.7, 0.7});
  CHECK(flat.std == 0.0);
  const auto fci = bootstrap_ci({0.7, 0.7, 0.7, 0.7}, 500, 3, 0.95);
  CHECK(fci.hi - fci.lo == 0.0);

  CHECK_THROWS_WITH_AS(summarize({1.0}), doctest::Contains("at least 2"), std::invalid_argument);
  CHECK_THROWS_AS(bootstrap_ci({}, 10, 0, 0.95), std::invalid_argument);
}

TEST_CASE("summarize against a two-pass oracle") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(3.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> xs(2 + static_cast<std::size_t>(trial));
    for (auto& x : xs) x = n(rng);
    long double sum = 0.0L;
    for (double x : xs) sum += x;
    const long double mean = sum / xs.size();
    long double ss = 0.0L;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const auto s = summarize(xs);
    CHECK(std::abs(s.mean - static_cast<double>(mean)) < 1e-12);
    CHECK(std::abs(s.std - static_cast<double>(std::sqrt(ss / (xs.size() - 1)))) < 1e-12);
  }
}

TEST_CASE("cohens_d") {
  const auto d = cohens_d({1.0, 2.0, 3.0}, {2.0, 3.0, 4.0});
  REQUIRE(d);
  CHECK(*d == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(cohens_d({1.0, 1.0}, {1.0, 1.0}) == 0.0);
  CHECK_FALSE(cohens_d({1.0, 1.0}, {2.0, 2.0}).has_value());
}

TEST_CASE("pareto frontier examples") {
  const std::vector<ParetoPoint> pts{{"a", 0.9, 0.8}, {"b", 0.5, 0.95}, {"c", 0.4, 0.7}, {"d", 0.9, 0.8}};
  const auto f = pareto_frontier(pts);
  REQUIRE(f.size() == 3);
  CHECK(f[0].label == "b");
  CHECK(f[1].label == "a");
  CHECK(f[2].label == "d");
  CHECK(pareto_frontier({}).empty());
}

TEST_CASE("pareto frontier matches brute force") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> grid(0, 9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ParetoPoint> pts;
    for (int i = 0; i < 12; ++i) pts.push_back({std::to_string(i), grid(rng) / 10.0, grid(rng) / 10.0});
    const auto f = pareto_frontier(pts);
    std::size_t expect = 0;
    for (const auto& p : pts) {
      const bool on = std::any_of(f.begin(), f.end(), [&p](const ParetoPoint& q) { return q.label == p.label; });
      CHECK(on == !dominated(p, pts));
      expect += on;
    }
    CHECK(f.size() == expect);
    for (std::size_t i = 1; i < f.size(); ++i) CHECK(f[i - 1].asr <= f[i].asr);
  }
}

TEST_CASE("aggregate") {
  std::vector<RunReport> rs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    rs.push_back(report("adaptive", s, 0.9 + 0.01 * s, 0.95));
    rs.push_back(report("plain", s, 1.0, 0.6 + 0.01 * s));
  }
  EvalConfig ec;
  ec.n_bootstrap = 300;
  const auto a = aggregate(rs, "plain", ec, false);
  REQUIRE(a.rows.size() == 2);
  const auto& row = a.rows[0];
  CHECK(row.mode == "adaptive");
  const auto& st = row.metrics.at("asr");
  CHECK(st.n == 3);
  CHECK(st.mean == doctest::Approx(0.91).epsilon(1e-12));
  REQUIRE(st.std);
  CHECK(*st.std == doctest::Approx(0.01).epsilon(1e-9));
  REQUIRE(st.ci);
  CHECK(st.ci->lo <= st.mean);
  CHECK(st.ci->hi >= st.mean);
  REQUIRE(row.metrics.at("clean_cos").cohens_d);
  CHECK(row.metrics.count("ood_asr") == 0);

  const auto csv = a.table_csv();
  CHECK(csv.rfind("family,mode,n,asr_mean,asr_std,asr_ci_lo,asr_ci_hi,asr_d,", 0) == 0);
  CHECK(a.pareto_csv().rfind("family,mode,asr,clean_cos,on_frontier\n", 0) == 0);
  CHECK(aggregate(rs, "plain", ec, false).table_csv() == csv);

  const std::vector<RunReport> one{report("adaptive", 0, 0.9, 0.95)};
  CHECK_THROWS_WITH_AS(aggregate(one, "plain", ec, false), doctest::Contains("fewer than 2"), std::invalid_argument);
  const auto single = aggregate(one, "plain", ec, true);
  const auto& s1 = single.rows[0].metrics.at("asr");
  CHECK(s1.mean == 0.9);
  CHECK_FALSE(s1.std);
  CHECK_FALSE(s1.ci);
  CHECK(single.table_csv().find("adaptive,1,0.9,,,,") != std::string::npos);
}
