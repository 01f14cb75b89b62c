// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aewc/consolidation.hpp"
#include "aewc/corpus.hpp"
#include "aewc/encoder.hpp"
#include "aewc/losses.hpp"
#include "aewc/optim.hpp"
#include "aewc/regulator.hpp"

namespace aewc {

enum class Mode { Plain, Lwf, LwfCos, Fixed, FixedCos, Rap, Adaptive };

std::string to_string(Mode m);
Mode parse_mode(std::string_view s);
bool uses_fisher(Mode m);
Sensor sensor_for(Mode m);

struct TrainConfig {
  Mode mode = Mode::Adaptive;
  TriggerFamily family = TriggerFamily::Unicode;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t steps = 500;
  std::size_t batch_size = 8;
  LossWeights weights;
  /// lambda0 doubles as the static weight for fixed / fixed_cos.
  RegulatorState regulator;
  RapConfig rap;
  std::uint64_t seed = 0;
  /// Also update the (active) adapter during backdoor injection.
  bool train_adapter = false;
  TriggerConfig trigger;

  void validate() const;
  nlohmann::json to_json() const;
};

struct StepLog {
  std::size_t step = 0;
  double l_bd = 0.0;
  double l_utl = 0.0;
  double l_cross = 0.0;
  double l_penalty = 0.0;
  double lambda = 0.0;
  double r_t = 0.0;
  double r_hat = 0.0;
  double grad_norm = 0.0;

  nlohmann::json to_json() const;
  static StepLog from_json(const nlohmann::json& j);
};

/// Per-batch scalar terms on the tape. `ewc` is invalid when no Fisher cache
/// is available; `rap` is always computed.
struct ObjectiveTerms {
  Var bd;
  Var utl_cos;
  Var utl_mse;
  Var cross;
  Var ewc;
  Var rap;
};

struct AssembledLoss {
  Var total;
  LossBreakdown breakdown;
};

/// Combines the terms as the mode prescribes. Terms whose effective weight is
/// zero are left out of the graph, so their gradients are exactly absent.
///   plain        w_b L_bd
///   lwf/lwf_cos  + w_u L_utl(mse/cos) + w_x L_cross
///   fixed(_cos)  + lambda0 L_ewc
///   rap          + rap penalty (lambda = 1)
///   adaptive     cos sensor + lambda_adaptive L_ewc
/// `lambda` is the EWC strength for this step (ignored by plain/lwf/rap).
AssembledLoss assemble_loss(Tape& tape, Mode mode, const ObjectiveTerms& terms, const LossWeights& weights,
                            double lambda);

struct TrainResult {
  EncoderModel student;
  std::vector<StepLog> logs;
  /// Hash of every batch consumed, in order.
  std::vector<std::string> batch_trace;

  std::string trace_hash() const;
  std::string logs_jsonl() const;
};

/// Runs exactly `config.steps` AdamW steps on a fresh copy of the teacher.
/// Throws std::invalid_argument before step 0 if an EWC mode has no cache,
/// ValidationError on teacher/cache/target mismatch, DivergenceError on NaN.
TrainResult train_run(const TrainConfig& config, const PoolSplit& pools, const FrozenEncoder& teacher,
                      const TargetSpec& target, const Vocab& vocab, const FisherCache* cache);

}  // namespace aewc
