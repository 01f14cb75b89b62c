// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aewc/corpus.hpp"
#include "aewc/encoder.hpp"

namespace aewc {

struct EvalConfig {
  double tau = 0.85;
  std::size_t n_bootstrap = 10000;
  std::uint64_t bootstrap_seed = 0;
  double ci_level = 0.95;

  void validate() const;
};

/// Fraction of embeddings with cos(e, z_target) >= tau.
double asr(const std::vector<Tensor>& poisoned_embeddings, const Tensor& z_target, double tau);
double asr(const EncoderModel& student, const Vocab& vocab, const std::vector<std::string>& poisoned,
           const Tensor& z_target, double tau);

struct CleanFidelity {
  double clean_cos = 0.0;
  double mse = 0.0;
  double student_target_cos = 0.0;
};

CleanFidelity clean_fidelity(const EncoderModel& student, const EncoderModel& teacher, const Vocab& vocab,
                             const std::vector<std::string>& clean, const Tensor& z_target);

/// Mean cos(S(p), z_target) over poisoned prompts.
double poison_cos(const EncoderModel& student, const Vocab& vocab, const std::vector<std::string>& poisoned,
                  const Tensor& z_target);

struct Metrics {
  double asr = 0.0;
  double clean_cos = 0.0;
  double mse = 0.0;
  double student_target_cos = 0.0;
  double poison_cos = 0.0;
};

struct RunReport {
  std::string mode;
  std::string family;
  std::uint64_t seed = 0;
  double tau = 0.85;
  Metrics in_dist;
  std::optional<Metrics> ood;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
};

/// Metric names in report/CSV order; OOD variants are prefixed with "ood_".
const std::vector<std::string>& metric_names();
/// Flattened metric map (OOD entries only when present).
std::map<std::string, double> flatten(const RunReport& r);

/// Scores `student` on the eval pool (and the OOD pool when non-empty).
/// Prompts the family cannot trigger are left out of the poisoned side.
Metrics evaluate_prompts(const EncoderModel& student, const EncoderModel& teacher, const Vocab& vocab,
                         const std::vector<std::string>& clean, TriggerFamily family, const TriggerConfig& trigger,
                         const Tensor& z_target, double tau);
RunReport evaluate_run(const EncoderModel& student, const EncoderModel& teacher, const Vocab& vocab,
                       const PoolSplit& pools, TriggerFamily family, const TriggerConfig& trigger,
                       const Tensor& z_target, const EvalConfig& config, const std::string& mode, std::uint64_t seed);

// Statistics.

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

/// Sample mean and standard deviation (n - 1). Throws for fewer than 2 values.
Summary summarize(const std::vector<double>& xs);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap CI of the mean.
Interval bootstrap_ci(const std::vector<double>& xs, std::size_t n_resamples, std::uint64_t seed, double level);

/// (mean_a - mean_b) / pooled std. nullopt when the pooled std is 0 and the
/// means differ; 0 when both are degenerate and equal.
std::optional<double> cohens_d(const std::vector<double>& a, const std::vector<double>& b);

struct ParetoPoint {
  std::string label;
  double asr = 0.0;
  double clean_cos = 0.0;
};

/// Non-dominated subset under (max asr, max clean_cos), sorted by asr
/// ascending with input order breaking ties. Duplicated points are all kept.
std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points);

struct MetricStats {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> std;
  std::optional<Interval> ci;
  std::optional<double> cohens_d;
};

struct ModeRow {
  std::string family;
  std::string mode;
  std::map<std::string, MetricStats> metrics;
};

struct AggregateReport {
  std::string baseline;
  std::vector<ModeRow> rows;
  /// Per family: one (mean ASR, mean clean_cos) point per mode, and its frontier.
  std::map<std::string, std::vector<ParetoPoint>> points;
  std::map<std::string, std::vector<ParetoPoint>> frontier;

  std::string table_csv() const;
  std::string pareto_csv() const;
};

/// Groups by (family, mode). Requires at least 2 seeds per group unless
/// `allow_single` is set, in which case std/CI/effect size are left empty.
AggregateReport aggregate(const std::vector<RunReport>& reports, const std::string& baseline_mode,
                          const EvalConfig& config, bool allow_single = false);

}  // namespace aewc
