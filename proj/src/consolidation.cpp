// SPDX-License-Identifier: Apache-2.0
#include "aewc/consolidation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include "aewc/container.hpp"
#include "aewc/errors.hpp"
#include "aewc/hash.hpp"

namespace aewc {

std::string to_string(FisherMode m) { return m == FisherMode::Literal ? "literal" : "sampled"; }

FisherMode parse_fisher_mode(std::string_view s) {
  if (s == "literal") return FisherMode::Literal;
  if (s == "sampled") return FisherMode::Sampled;
  throw std::invalid_argument("unknown fisher mode: " + std::string(s));
}

void FisherCache::validate() const {
  if (fisher.size() != theta_star.size()) throw ValidationError("fisher/theta_star length mismatch");
  for (double f : fisher) {
    if (!std::isfinite(f) || f < 0.0) throw ValidationError("fisher entries must be finite and nonnegative");
  }
  theta_star.validate();
}

std::string FisherCache::content_hash() const {
  Sha256 h;
  hash_params(h, theta_star);
  h.update(std::span<const double>(fisher));
  h.update_field(to_string(mode));
  h.update_u64(n_prompts);
  h.update_u64(noise_draws);
  h.update_u64(seed);
  h.update_field(teacher_hash);
  h.update_field(corpus_hash);
  return h.hex();
}

std::vector<double> fisher_diagonal(const ParamVector& theta_star, std::size_t n_items,
                                    const std::function<Var(Tape&, Source, std::size_t)>& forward,
                                    const std::function<Tensor(std::size_t)>& reference,
                                    const FisherOptions& options) {
  if (n_items == 0) throw std::invalid_argument("fisher estimation needs at least one prompt");
  if (options.mode == FisherMode::Sampled && options.noise_draws == 0) {
    throw std::invalid_argument("sampled fisher needs at least one noise draw");
  }
  std::vector<double> fisher(theta_star.size(), 0.0);
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t samples = 0;

  auto accumulate = [&fisher](const std::vector<double>& g) {
    for (std::size_t i = 0; i < g.size(); ++i) fisher[i] += g[i] * g[i];
  };

  for (std::size_t k = 0; k < n_items; ++k) {
    Tape tape;
    auto src = tape.bind(theta_star);
    Var out = forward(tape, src, k);
    if (options.mode == FisherMode::Literal) {
      Var target = tape.constant(reference(k));
      Var sur = tape.add(tape.constant(Tensor::scalar(1.0)), tape.scale(tape.cosine(out, target), -1.0));
      tape.backward(sur);
      accumulate(tape.grad(src));
      ++samples;
    } else {
      const auto dim = out.value().size();
      for (std::size_t d = 0; d < options.noise_draws; ++d) {
        std::vector<double> eta(dim);
        for (auto& e : eta) e = normal(rng);
        Var proj = tape.dot(tape.constant(Tensor::vector(std::move(eta))), out);
        tape.backward(proj);
        accumulate(tape.grad(src));
        ++samples;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(samples);
  for (auto& f : fisher) {
    f *= inv;
    if (!(f >= 0.0) || !std::isfinite(f)) throw std::logic_error("fisher estimate produced an invalid entry");
  }
  return fisher;
}

FisherCache estimate_fisher(const FrozenEncoder& teacher, const Vocab& vocab, const std::vector<std::string>& pool,
                            const FisherOptions& options, const std::vector<std::string>& eval_prompts,
                            const std::string& corpus_hash) {
  {
    std::unordered_set<std::string> evals(eval_prompts.begin(), eval_prompts.end());
    for (const auto& p : pool) {
      if (evals.count(p)) throw ValidationError("fisher pool not disjoint from evaluation prompts: '" + p + "'");
    }
  }
  const auto& model = teacher.model();
  std::vector<std::vector<std::size_t>> tokens;
  tokens.reserve(pool.size());
  for (const auto& p : pool) tokens.push_back(tokenize(p, vocab));

  auto forward = [&](Tape& tape, Source src, std::size_t k) {
    std::optional<AdapterBinding> binding;
    if (model.adapter) binding = AdapterBinding{tape.bind(model.adapter->params), &model.adapter->config, nullptr};
    return encode(tape, src, tokens[k], binding ? &*binding : nullptr).out();
  };
  auto reference = [&](std::size_t k) { return encode(model, tokens[k]); };

  FisherCache cache;
  cache.theta_star = model.theta;
  cache.fisher = fisher_diagonal(model.theta, pool.size(), forward, reference, options);
  cache.n_prompts = pool.size();
  cache.mode = options.mode;
  cache.noise_draws = options.mode == FisherMode::Sampled ? options.noise_draws : 0;
  cache.seed = options.seed;
  cache.teacher_hash = teacher.hash();
  cache.corpus_hash = corpus_hash;
  return cache;
}

double ewc_penalty(const ParamVector& theta, const FisherCache& cache) {
  if (theta.size() != cache.fisher.size() || theta.size() != cache.theta_star.size()) {
    throw std::invalid_argument("ewc_penalty: parameter length mismatch");
  }
  const auto& t = theta.values();
  const auto& s = cache.theta_star.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = t[i] - s[i];
    acc += cache.fisher[i] * d * d;
  }
  return 0.5 * acc;
}

Var ewc_penalty(Tape& tape, Source theta, const FisherCache& cache) {
  return tape.quadratic_penalty(theta, cache.theta_star.values(), cache.fisher);
}

void RapConfig::validate() const {
  if (!std::isfinite(lambda_rap) || lambda_rap < 0.0) throw std::invalid_argument("lambda_rap must be >= 0");
  if (anchor_layer != "dense1" && anchor_layer != "dense2" && anchor_layer != "hidden") {
    throw std::invalid_argument("unknown RAP anchor layer: " + anchor_layer);
  }
}

double rap_penalty(std::span<const double> s, std::span<const double> t, double lambda_rap) {
  return lambda_rap * mse(s, t);
}

Var rap_penalty(Tape& tape, Var s, Var t, double lambda_rap) { return tape.scale(tape.mse(s, t), lambda_rap); }

void cache_save(const FisherCache& cache, const std::filesystem::path& path) {
  cache.validate();
  Container c;
  c.header = {{"kind", "fisher_cache"},
              {"format_version", cache.format_version},
              {"n_prompts", cache.n_prompts},
              {"mode", to_string(cache.mode)},
              {"noise_draws", cache.noise_draws},
              {"seed", cache.seed},
              {"teacher_hash", cache.teacher_hash},
              {"corpus_hash", cache.corpus_hash},
              {"theta_layout", layout_to_json(cache.theta_star)}};
  c.arrays.emplace_back("theta_star", cache.theta_star.values());
  c.arrays.emplace_back("fisher", cache.fisher);
  write_container(path, c);
}

FisherCache cache_load(const std::filesystem::path& path, const std::string& expected_teacher_hash) {
  const auto c = read_container(path);
  const auto& h = c.header;
  if (h.value("kind", std::string{}) != "fisher_cache") throw ValidationError("not a Fisher cache: " + path.string());
  if (h.value("format_version", -1) != kFisherFormatVersion) {
    throw ValidationError("unsupported Fisher cache format version");
  }
  FisherCache cache;
  try {
    cache.theta_star = params_from_layout(h.at("theta_layout"), c.array("theta_star"));
    cache.fisher = c.array("fisher");
    cache.n_prompts = h.at("n_prompts");
    cache.mode = parse_fisher_mode(h.at("mode").get<std::string>());
    cache.noise_draws = h.at("noise_draws");
    cache.seed = h.at("seed");
    cache.teacher_hash = h.at("teacher_hash");
    cache.corpus_hash = h.at("corpus_hash");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("corrupt Fisher cache header: ") + e.what());
  }
  cache.validate();
  if (cache.teacher_hash != expected_teacher_hash) {
    throw ValidationError("stale Fisher cache: built for teacher " + cache.teacher_hash + ", expected " +
                          expected_teacher_hash);
  }
  return cache;
}

}  // namespace aewc
