// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aewc/consolidation.hpp"
#include "aewc/corpus.hpp"
#include "aewc/encoder.hpp"
#include "aewc/eval.hpp"
#include "aewc/losses.hpp"
#include "aewc/trainer.hpp"

namespace aewc {

/// Per-family hyperparameters (loss weights and regulator settings).
struct FamilyDefaults {
  LossWeights weights;
  double lambda0 = 0.09;
  double alpha = 0.85;
  double lambda_min = 0.05;
  double lambda_max = 0.50;
  double lr = 1e-3;
  std::size_t steps = 500;
};

/// "toy" keeps desk-scale lr/steps; "paper" uses full-scale per-family lr/steps.
FamilyDefaults family_defaults(TriggerFamily family, const std::string& preset);

struct ExperimentConfig {
  std::string preset = "toy";
  EncoderConfig encoder;
  std::uint64_t teacher_seed = 7;

  bool lora_enabled = false;
  AdapterConfig lora;
  StyleOptions style;
  std::string style_phrase{kDefaultStylePhrase};

  std::uint64_t corpus_seed = 11;
  std::size_t corpus_size = 2048;
  std::size_t fisher_n = 512;
  std::size_t eval_n = 256;
  std::string ood_file;
  std::size_t ood_size = 256;

  std::string target_phrase{kDefaultTargetPhrase};
  TriggerConfig trigger;
  FisherOptions fisher;
  EvalConfig eval;

  /// Raw "train" section: keys here override the family defaults.
  nlohmann::json train_overrides = nlohmann::json::object();
  /// Optional "families": {"unicode": {...}} overrides, applied after "train".
  nlohmann::json family_overrides = nlohmann::json::object();

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  TrainConfig train_config(TriggerFamily family, Mode mode, std::uint64_t seed) const;
};

/// Everything shared by the runs of one experiment: vocabulary, frozen
/// teacher (base encoder plus optional style adapter), pools and target.
struct Experiment {
  ExperimentConfig config;
  Vocab vocab;
  FrozenEncoder teacher;
  PoolSplit pools;
  TargetSpec target;
};

Experiment build_experiment(const ExperimentConfig& config);

FisherCache build_fisher(const Experiment& ex);

struct CellResult {
  TrainResult train;
  RunReport report;
};

/// Trains one (family, mode, seed) cell and evaluates it. `label` names the
/// run in its report (defaults to the mode name).
CellResult run_cell(const Experiment& ex, const TrainConfig& config, const FisherCache* cache,
                    const std::string& label = {});

}  // namespace aewc
