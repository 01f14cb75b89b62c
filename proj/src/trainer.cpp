// SPDX-License-Identifier: Apache-2.0
#include "aewc/trainer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "aewc/errors.hpp"
#include "aewc/hash.hpp"

namespace aewc {

namespace {

struct ModeInfo {
  Mode mode;
  const char* name;
};

constexpr ModeInfo kModes[] = {{Mode::Plain, "plain"},        {Mode::Lwf, "lwf"},   {Mode::LwfCos, "lwf_cos"},
                               {Mode::Fixed, "fixed"},        {Mode::FixedCos, "fixed_cos"},
                               {Mode::Rap, "rap"},            {Mode::Adaptive, "adaptive"}};

Var batch_mean(Tape& tape, const std::vector<Var>& xs) {
  Var acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = tape.add(acc, xs[i]);
  return tape.scale(acc, 1.0 / static_cast<double>(xs.size()));
}

double l2_norm(const std::vector<double>& g, double acc = 0.0) {
  for (double x : g) acc += x * x;
  return acc;
}

}  // namespace

std::string to_string(Mode m) {
  for (const auto& info : kModes) {
    if (info.mode == m) return info.name;
  }
  throw std::logic_error("unknown mode");
}

Mode parse_mode(std::string_view s) {
  for (const auto& info : kModes) {
    if (s == info.name) return info.mode;
  }
  throw std::invalid_argument("unknown mode: " + std::string(s));
}

bool uses_fisher(Mode m) { return m == Mode::Fixed || m == Mode::FixedCos || m == Mode::Adaptive; }

Sensor sensor_for(Mode m) {
  switch (m) {
    case Mode::Lwf:
    case Mode::Fixed:
    case Mode::Rap: return Sensor::Mse;
    default: return Sensor::Cos;
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  if (!std::isfinite(weight_decay) || weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  weights.validate();
  regulator.validate();
  if (uses_fisher(mode) && (!std::isfinite(regulator.lambda0) || regulator.lambda0 < 0.0)) {
    throw std::invalid_argument("lambda0 must be finite and nonnegative for " + to_string(mode));
  }
  if (mode == Mode::Rap) rap.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"mode", to_string(mode)},
          {"family", to_string(family)},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"steps", steps},
          {"batch_size", batch_size},
          {"w_b", weights.w_b},
          {"w_u", weights.w_u},
          {"w_x", weights.w_x},
          {"lambda0", regulator.lambda0},
          {"alpha", regulator.alpha},
          {"beta", regulator.beta},
          {"eps", regulator.eps},
          {"lambda_min", regulator.lambda_min},
          {"lambda_max", regulator.lambda_max},
          {"lambda_rap", rap.lambda_rap},
          {"rap_anchor", rap.anchor_layer},
          {"seed", seed},
          {"train_adapter", train_adapter}};
}

nlohmann::json StepLog::to_json() const {
  return {{"step", step},       {"L_bd", l_bd},   {"L_utl", l_utl}, {"L_cross", l_cross},
          {"L_penalty", l_penalty}, {"lambda", lambda}, {"r_t", r_t},     {"r_hat", r_hat},
          {"grad_norm", grad_norm}};
}

StepLog StepLog::from_json(const nlohmann::json& j) {
  StepLog s;
  s.step = j.at("step");
  s.l_bd = j.at("L_bd");
  s.l_utl = j.at("L_utl");
  s.l_cross = j.at("L_cross");
  s.l_penalty = j.at("L_penalty");
  s.lambda = j.at("lambda");
  s.r_t = j.at("r_t");
  s.r_hat = j.at("r_hat");
  s.grad_norm = j.at("grad_norm");
  return s;
}

AssembledLoss assemble_loss(Tape& tape, Mode mode, const ObjectiveTerms& terms, const LossWeights& weights,
                            double lambda) {
  LossWeights w = weights;
  Var utl = sensor_for(mode) == Sensor::Cos ? terms.utl_cos : terms.utl_mse;
  Var penalty;
  double lam = 0.0;
  switch (mode) {
    case Mode::Plain:
      w.w_u = 0.0;
      w.w_x = 0.0;
      break;
    case Mode::Lwf:
    case Mode::LwfCos: penalty = terms.ewc; break;
    case Mode::Fixed:
    case Mode::FixedCos:
    case Mode::Adaptive:
      if (!terms.ewc.valid()) throw std::invalid_argument(to_string(mode) + " needs a Fisher cache");
      penalty = terms.ewc;
      lam = lambda;
      break;
    case Mode::Rap:
      penalty = terms.rap;
      lam = 1.0;
      break;
  }

  Var total = tape.scale(terms.bd, w.w_b);
  if (w.w_u != 0.0) total = tape.add(total, tape.scale(utl, w.w_u));
  if (w.w_x != 0.0) total = tape.add(total, tape.scale(terms.cross, w.w_x));
  if (lam != 0.0) total = tape.add(total, tape.scale(penalty, lam));

  const double pen = penalty.valid() ? penalty.item() : 0.0;
  auto b = total_objective(terms.bd.item(), utl.item(), terms.cross.item(), pen, w, lam);
  b.total = total.item();
  return {total, b};
}

std::string TrainResult::trace_hash() const {
  Sha256 h;
  for (const auto& b : batch_trace) h.update_field(b);
  return h.hex();
}

std::string TrainResult::logs_jsonl() const {
  std::ostringstream os;
  for (const auto& l : logs) os << l.to_json().dump() << '\n';
  return os.str();
}

TrainResult train_run(const TrainConfig& config, const PoolSplit& pools, const FrozenEncoder& teacher,
                      const TargetSpec& target, const Vocab& vocab, const FisherCache* cache) {
  config.validate();
  if (uses_fisher(config.mode) && cache == nullptr) {
    throw std::invalid_argument("mode " + to_string(config.mode) + " requires a Fisher cache");
  }
  const auto& tmodel = teacher.model();
  if (teacher.recompute_hash() != teacher.hash()) throw ValidationError("teacher snapshot hash mismatch");
  if (config.mode == Mode::Plain) cache = nullptr;
  if (cache != nullptr) {
    cache->validate();
    if (cache->teacher_hash != teacher.hash()) throw ValidationError("stale Fisher cache for this teacher");
    if (!cache->theta_star.same_layout(tmodel.theta)) throw ValidationError("Fisher cache layout mismatch");
  }
  verify_target(target, teacher, vocab);
  if (config.train_adapter && !tmodel.adapter) throw std::invalid_argument("train_adapter set without an adapter");

  TrainResult result{tmodel, {}, {}};
  EncoderModel& student = result.student;
  if (config.steps == 0) return result;

  struct TeacherOut {
    Tensor out;
    Tensor anchor;
  };
  std::unordered_map<std::string, TeacherOut> tcache;
  auto teacher_out = [&](const std::string& prompt) -> const TeacherOut& {
    auto it = tcache.find(prompt);
    if (it != tcache.end()) return it->second;
    const auto toks = tokenize(prompt, vocab);
    TeacherOut t{encode(tmodel, toks), encode_layer(tmodel, toks, config.rap.anchor_layer)};
    return tcache.emplace(prompt, std::move(t)).first->second;
  };

  BatchStream stream(pools.train_pool, config.family, config.batch_size, config.seed, config.trigger);
  RegulatorState reg = config.regulator;
  OptState opt_theta(student.theta.size());
  OptState opt_adapter(student.adapter ? student.adapter->params.size() : 0);
  result.logs.reserve(config.steps);
  result.batch_trace.reserve(config.steps);

  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch = stream.next();
    result.batch_trace.push_back(batch_hash(batch));
    StepLog log;
    log.step = step;
    try {
      Tape tape;
      const Source src = tape.bind(student.theta);
      std::optional<AdapterBinding> binding;
      if (student.adapter) binding = AdapterBinding{tape.bind(student.adapter->params), &student.adapter->config, nullptr};
      const AdapterBinding* ab = binding ? &*binding : nullptr;
      const Var z = tape.constant(target.z_target);

      std::vector<Var> bd, ucos, umse, cross, rap;
      for (const auto& t : batch) {
        const auto tp = encode(tape, src, tokenize(t.poisoned, vocab), ab);
        bd.push_back(loss_bd(tape, tp.out(), z));

        const auto& tc = teacher_out(t.clean);
        const auto sc = encode(tape, src, tokenize(t.clean, vocab), ab);
        const Var tcv = tape.constant(tc.out);
        ucos.push_back(loss_utl(tape, sc.out(), tcv, Sensor::Cos));
        umse.push_back(loss_utl(tape, sc.out(), tcv, Sensor::Mse));
        rap.push_back(rap_penalty(tape, sc.layer(config.rap.anchor_layer), tape.constant(tc.anchor),
                                  config.rap.lambda_rap));

        const auto& tm = teacher_out(t.mismatch);
        const auto sm = encode(tape, src, tokenize(t.mismatch, vocab), ab);
        cross.push_back(loss_cross(tape, sm.out(), tape.constant(tm.out)));
      }
      ObjectiveTerms terms{batch_mean(tape, bd),    batch_mean(tape, ucos), batch_mean(tape, umse),
                           batch_mean(tape, cross), Var{},                  batch_mean(tape, rap)};
      if (cache != nullptr) terms.ewc = ewc_penalty(tape, src, *cache);

      log.r_t = ratio(terms.utl_cos.item(), terms.bd.item(), reg.eps);
      log.r_hat = ema_update(reg, log.r_t);
      const double lam = config.mode == Mode::Adaptive ? lambda_adaptive(reg) : reg.lambda0;

      const auto assembled = assemble_loss(tape, config.mode, terms, config.weights, lam);
      log.l_bd = assembled.breakdown.l_bd;
      log.l_utl = assembled.breakdown.l_utl;
      log.l_cross = assembled.breakdown.l_cross;
      log.l_penalty = assembled.breakdown.l_penalty;
      log.lambda = assembled.breakdown.lambda;

      tape.backward(assembled.total);
      const auto& g = tape.grad(src);
      double sq = l2_norm(g);
      adamw_step(student.theta.values(), g, opt_theta, config.lr, config.weight_decay);
      if (config.train_adapter) {
        const auto& ga = tape.grad(binding->src);
        sq = l2_norm(ga, sq);
        adamw_step(student.adapter->params.values(), ga, opt_adapter, config.lr, config.weight_decay);
      }
      log.grad_norm = std::sqrt(sq);
      if (!std::isfinite(log.grad_norm)) throw NumericError("non-finite gradient norm");
      student.theta.validate();
    } catch (const NumericError& e) {
      throw DivergenceError(step, e.what());
    } catch (const std::invalid_argument& e) {
      // ratio/ema reject non-finite inputs with invalid_argument
      throw DivergenceError(step, e.what());
    }
    result.logs.push_back(log);
  }
  if (teacher.recompute_hash() != teacher.hash()) throw ValidationError("teacher mutated during training");
  return result;
}

}  // namespace aewc
