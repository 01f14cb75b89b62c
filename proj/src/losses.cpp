// SPDX-License-Identifier: Apache-2.0
#include "aewc/losses.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "aewc/errors.hpp"

namespace aewc {

std::string to_string(Sensor s) { return s == Sensor::Mse ? "mse" : "cos"; }

void LossWeights::validate() const {
  for (double w : {w_b, w_u, w_x}) {
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("loss weights must be finite and nonnegative");
  }
}

TargetSpec make_target(const FrozenEncoder& teacher, const Vocab& vocab, std::string_view phrase) {
  return {std::string(phrase), embed_text(teacher.model(), vocab, phrase)};
}

void verify_target(const TargetSpec& target, const FrozenEncoder& teacher, const Vocab& vocab) {
  const auto fresh = embed_text(teacher.model(), vocab, target.phrase);
  const auto& a = fresh.values;
  const auto& b = target.z_target.values;
  if (a.size() != b.size() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) {
    throw ValidationError("z_target does not match the teacher embedding of '" + target.phrase + "'");
  }
}

double loss_bd(std::span<const double> s, std::span<const double> z) { return 1.0 - cosine(s, z); }

double loss_utl(std::span<const double> s, std::span<const double> t, Sensor sensor) {
  return sensor == Sensor::Cos ? 1.0 - cosine(s, t) : mse(s, t);
}

double loss_cross(std::span<const double> s, std::span<const double> t) { return mse(s, t); }

Var loss_bd(Tape& tape, Var s, Var z) {
  return tape.add(tape.constant(Tensor::scalar(1.0)), tape.scale(tape.cosine(s, z), -1.0));
}

Var loss_utl(Tape& tape, Var s, Var t, Sensor sensor) {
  if (sensor == Sensor::Mse) return tape.mse(s, t);
  return tape.add(tape.constant(Tensor::scalar(1.0)), tape.scale(tape.cosine(s, t), -1.0));
}

Var loss_cross(Tape& tape, Var s, Var t) { return tape.mse(s, t); }

LossBreakdown total_objective(double l_bd, double l_utl, double l_cross, double l_penalty, const LossWeights& w,
                              double lambda) {
  const std::pair<const char*, double> terms[] = {
      {"L_bd", l_bd}, {"L_utl", l_utl}, {"L_cross", l_cross}, {"L_penalty", l_penalty}, {"lambda", lambda}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss component ") + name);
  }
  LossBreakdown b{l_bd, l_utl, l_cross, l_penalty, lambda, 0.0};
  b.total = w.w_b * l_bd + w.w_u * l_utl + w.w_x * l_cross + lambda * l_penalty;
  return b;
}

}  // namespace aewc
