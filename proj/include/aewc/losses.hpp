// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "aewc/encoder.hpp"
#include "aewc/numerics.hpp"

namespace aewc {

enum class Sensor { Mse, Cos };

std::string to_string(Sensor s);

struct LossWeights {
  double w_b = 1.65;
  double w_u = 1.15;
  double w_x = 0.08;

  void validate() const;
};

/// Backdoor target: teacher embedding of a short phrase.
struct TargetSpec {
  std::string phrase;
  Tensor z_target;
};

TargetSpec make_target(const FrozenEncoder& teacher, const Vocab& vocab, std::string_view phrase);
/// Recomputes the teacher embedding and throws ValidationError if it differs bitwise.
void verify_target(const TargetSpec& target, const FrozenEncoder& teacher, const Vocab& vocab);

/// Every term of one objective evaluation. `penalty` is L_ewc for EWC modes
/// and the already-scaled RAP penalty for rap.
struct LossBreakdown {
  double l_bd = 0.0;
  double l_utl = 0.0;
  double l_cross = 0.0;
  double l_penalty = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

// Scalar forms.
double loss_bd(std::span<const double> student_emb, std::span<const double> z_target);
double loss_utl(std::span<const double> student_emb, std::span<const double> teacher_emb, Sensor sensor);
double loss_cross(std::span<const double> student_emb_m, std::span<const double> teacher_emb_m);

// Tape forms.
Var loss_bd(Tape& tape, Var student_emb, Var z_target);
Var loss_utl(Tape& tape, Var student_emb, Var teacher_emb, Sensor sensor);
Var loss_cross(Tape& tape, Var student_emb_m, Var teacher_emb_m);

/// w_b*L_bd + w_u*L_utl + w_x*L_cross + lambda*L_penalty. Throws
/// NumericError naming the first non-finite component.
LossBreakdown total_objective(double l_bd, double l_utl, double l_cross, double l_penalty, const LossWeights& w,
                              double lambda);

}  // namespace aewc
