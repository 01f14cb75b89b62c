// SPDX-License-Identifier: Apache-2.0
#include "aewc/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace aewc {

namespace {

std::vector<Tensor> embed_all(const EncoderModel& model, const Vocab& vocab, const std::vector<std::string>& prompts) {
  std::vector<Tensor> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(embed_text(model, vocab, p));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

nlohmann::json metrics_json(const Metrics& m) {
  return {{"asr", m.asr},
          {"clean_cos", m.clean_cos},
          {"mse", m.mse},
          {"student_target_cos", m.student_target_cos},
          {"poison_cos", m.poison_cos}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.asr = j.at("asr");
  m.clean_cos = j.at("clean_cos");
  m.mse = j.at("mse");
  m.student_target_cos = j.at("student_target_cos");
  m.poison_cos = j.at("poison_cos");
  return m;
}

}  // namespace

void EvalConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in (0, 1]");
  if (n_bootstrap == 0) throw std::invalid_argument("n_bootstrap must be positive");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw std::invalid_argument("ci_level must be in (0, 1)");
}

double asr(const std::vector<Tensor>& embeddings, const Tensor& z_target, double tau) {
  if (embeddings.empty()) throw std::invalid_argument("asr: empty prompt set");
  std::size_t hits = 0;
  for (const auto& e : embeddings) {
    if (cosine(e.values, z_target.values) >= tau) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(embeddings.size());
}

double asr(const EncoderModel& student, const Vocab& vocab, const std::vector<std::string>& poisoned,
           const Tensor& z_target, double tau) {
  if (poisoned.empty()) throw std::invalid_argument("asr: empty prompt set");
  return asr(embed_all(student, vocab, poisoned), z_target, tau);
}

CleanFidelity clean_fidelity(const EncoderModel& student, const EncoderModel& teacher, const Vocab& vocab,
                             const std::vector<std::string>& clean, const Tensor& z_target) {
  if (clean.empty()) throw std::invalid_argument("clean_fidelity: empty prompt set");
  CleanFidelity f;
  for (const auto& c : clean) {
    const auto s = embed_text(student, vocab, c);
    const auto t = embed_text(teacher, vocab, c);
    f.clean_cos += cosine(s.values, t.values);
    f.mse += mse(s.values, t.values);
    f.student_target_cos += cosine(s.values, z_target.values);
  }
  const double n = static_cast<double>(clean.size());
  f.clean_cos /= n;
  f.mse /= n;
  f.student_target_cos /= n;
  return f;
}

double poison_cos(const EncoderModel& student, const Vocab& vocab, const std::vector<std::string>& poisoned,
                  const Tensor& z_target) {
  if (poisoned.empty()) throw std::invalid_argument("poison_cos: empty prompt set");
  double acc = 0.0;
  for (const auto& p : poisoned) acc += cosine(embed_text(student, vocab, p).values, z_target.values);
  return acc / static_cast<double>(poisoned.size());
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j = {{"mode", mode}, {"family", family}, {"seed", seed}, {"tau", tau}};
  j["metrics"] = metrics_json(in_dist);
  j["ood"] = ood ? metrics_json(*ood) : nlohmann::json(nullptr);
  return j;
}

RunReport RunReport::from_json(const nlohmann::json& j) {
  RunReport r;
  r.mode = j.at("mode");
  r.family = j.at("family");
  r.seed = j.at("seed");
  r.tau = j.at("tau");
  r.in_dist = metrics_from_json(j.at("metrics"));
  if (j.contains("ood") && !j.at("ood").is_null()) r.ood = metrics_from_json(j.at("ood"));
  return r;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "asr",     "clean_cos",     "mse",     "student_target_cos",     "poison_cos",
      "ood_asr", "ood_clean_cos", "ood_mse", "ood_student_target_cos", "ood_poison_cos"};
  return names;
}

std::map<std::string, double> flatten(const RunReport& r) {
  std::map<std::string, double> out;
  auto put = [&out](const std::string& prefix, const Metrics& m) {
    out[prefix + "asr"] = m.asr;
    out[prefix + "clean_cos"] = m.clean_cos;
    out[prefix + "mse"] = m.mse;
    out[prefix + "student_target_cos"] = m.student_target_cos;
    out[prefix + "poison_cos"] = m.poison_cos;
  };
  put("", r.in_dist);
  if (r.ood) put("ood_", *r.ood);
  return out;
}

Metrics evaluate_prompts(const EncoderModel& student, const EncoderModel& teacher, const Vocab& vocab,
                         const std::vector<std::string>& clean, TriggerFamily family, const TriggerConfig& trigger,
                         const Tensor& z_target, double tau) {
  std::vector<std::string> poisoned;
  for (const auto& c : clean) {
    if (is_triggerable(c, family, trigger)) poisoned.push_back(apply_trigger(c, family, trigger));
  }
  Metrics m;
  const auto f = clean_fidelity(student, teacher, vocab, clean, z_target);
  m.clean_cos = f.clean_cos;
  m.mse = f.mse;
  m.student_target_cos = f.student_target_cos;
  const auto emb = embed_all(student, vocab, poisoned);
  m.asr = asr(emb, z_target, tau);
  double pc = 0.0;
  for (const auto& e : emb) pc += cosine(e.values, z_target.values);
  m.poison_cos = pc / static_cast<double>(emb.size());
  return m;
}

RunReport evaluate_run(const EncoderModel& student, const EncoderModel& teacher, const Vocab& vocab,
                       const PoolSplit& pools, TriggerFamily family, const TriggerConfig& trigger,
                       const Tensor& z_target, const EvalConfig& config, const std::string& mode, std::uint64_t seed) {
  config.validate();
  RunReport r;
  r.mode = mode;
  r.family = to_string(family);
  r.seed = seed;
  r.tau = config.tau;
  r.in_dist = evaluate_prompts(student, teacher, vocab, pools.eval_pool, family, trigger, z_target, config.tau);
  if (!pools.ood_pool.empty()) {
    r.ood = evaluate_prompts(student, teacher, vocab, pools.ood_pool, family, trigger, z_target, config.tau);
  }
  return r;
}

Summary summarize(const std::vector<double>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("standard deviation needs at least 2 values");
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

Interval bootstrap_ci(const std::vector<double>& xs, std::size_t n_resamples, std::uint64_t seed, double level) {
  if (xs.empty()) throw std::invalid_argument("bootstrap_ci: empty sample");
  if (n_resamples == 0) throw std::invalid_argument("bootstrap_ci: n_resamples must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
  std::vector<double> means(n_resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += xs[pick(rng)];
    m = s / static_cast<double>(xs.size());
  }
  std::sort(means.begin(), means.end());
  const double a = (1.0 - level) / 2.0;
  return {quantile(means, a), quantile(means, 1.0 - a)};
}

std::optional<double> cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  const auto sa = summarize(a);
  const auto sb = summarize(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double pooled = std::sqrt(((na - 1.0) * sa.std * sa.std + (nb - 1.0) * sb.std * sb.std) / (na + nb - 2.0));
  const double diff = sa.mean - sb.mean;
  if (pooled == 0.0) {
    if (diff == 0.0) return 0.0;
    return std::nullopt;
  }
  return diff / pooled;
}

std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points) {
  std::vector<ParetoPoint> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      const auto& p = points[i];
      const auto& q = points[j];
      dominated = q.asr >= p.asr && q.clean_cos >= p.clean_cos && (q.asr > p.asr || q.clean_cos > p.clean_cos);
    }
    if (!dominated) out.push_back(points[i]);
  }
  std::stable_sort(out.begin(), out.end(), [](const ParetoPoint& a, const ParetoPoint& b) { return a.asr < b.asr; });
  return out;
}

AggregateReport aggregate(const std::vector<RunReport>& reports, const std::string& baseline_mode,
                          const EvalConfig& config, bool allow_single) {
  config.validate();
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  using Key = std::pair<std::string, std::string>;
  std::map<Key, std::vector<const RunReport*>> groups;
  for (const auto& r : reports) groups[{r.family, r.mode}].push_back(&r);

  auto column = [](const std::vector<const RunReport*>& g, const std::string& metric) {
    std::vector<double> xs;
    for (const auto* r : g) {
      const auto flat = flatten(*r);
      if (auto it = flat.find(metric); it != flat.end()) xs.push_back(it->second);
    }
    return xs;
  };

  AggregateReport agg;
  agg.baseline = baseline_mode;
  for (const auto& [key, group] : groups) {
    if (group.size() < 2 && !allow_single) {
      throw std::invalid_argument("aggregate: " + key.first + "/" + key.second + " has fewer than 2 seeds");
    }
    ModeRow row{key.first, key.second, {}};
    const auto base_it = groups.find({key.first, baseline_mode});
    for (const auto& metric : metric_names()) {
      const auto xs = column(group, metric);
      if (xs.empty()) continue;
      MetricStats st;
      st.n = xs.size();
      st.mean = mean_of(xs);
      if (xs.size() >= 2) {
        const auto s = summarize(xs);
        st.mean = s.mean;
        st.std = s.std;
        st.ci = bootstrap_ci(xs, config.n_bootstrap, config.bootstrap_seed, config.ci_level);
        if (base_it != groups.end()) {
          const auto bs = column(base_it->second, metric);
          if (bs.size() >= 2) st.cohens_d = cohens_d(xs, bs);
        }
      }
      row.metrics[metric] = st;
    }
    agg.points[key.first].push_back({key.second, row.metrics.at("asr").mean, row.metrics.at("clean_cos").mean});
    agg.rows.push_back(std::move(row));
  }
  for (const auto& [family, pts] : agg.points) agg.frontier[family] = pareto_frontier(pts);
  return agg;
}

std::string AggregateReport::table_csv() const {
  std::ostringstream os;
  os << "family,mode,n";
  for (const auto& m : metric_names()) os << ',' << m << "_mean," << m << "_std," << m << "_ci_lo," << m << "_ci_hi," << m << "_d";
  os << '\n';
  for (const auto& row : rows) {
    os << row.family << ',' << row.mode << ',' << row.metrics.at("asr").n;
    for (const auto& m : metric_names()) {
      auto it = row.metrics.find(m);
      if (it == row.metrics.end()) {
        os << ",,,,,";
        continue;
      }
      const auto& st = it->second;
      os << ',' << fmt(st.mean) << ',' << (st.std ? fmt(*st.std) : "") << ',' << (st.ci ? fmt(st.ci->lo) : "") << ','
         << (st.ci ? fmt(st.ci->hi) : "") << ',' << (st.cohens_d ? fmt(*st.cohens_d) : "");
    }
    os << '\n';
  }
  return os.str();
}

std::string AggregateReport::pareto_csv() const {
  std::ostringstream os;
  os << "family,mode,asr,clean_cos,on_frontier\n";
  for (const auto& [family, pts] : points) {
    const auto& front = frontier.at(family);
    for (const auto& p : pts) {
      const bool on = std::any_of(front.begin(), front.end(), [&p](const ParetoPoint& f) { return f.label == p.label; });
      os << family << ',' << p.label << ',' << fmt(p.asr) << ',' << fmt(p.clean_cos) << ',' << (on ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

}  // namespace aewc
