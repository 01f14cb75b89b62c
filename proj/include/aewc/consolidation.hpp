// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aewc/encoder.hpp"
#include "aewc/numerics.hpp"

namespace aewc {

/// literal: squared gradients of 1 - cos(S_theta(c), T(c)) at theta*.
/// sampled: Monte-Carlo Gauss-Newton diagonal, E_eta[(d(eta . S_theta(c))/d theta_i)^2]
/// with eta ~ N(0, I) in embedding space.
enum class FisherMode { Literal, Sampled };

std::string to_string(FisherMode m);
FisherMode parse_fisher_mode(std::string_view s);

inline constexpr int kFisherFormatVersion = 1;

struct FisherCache {
  ParamVector theta_star;
  std::vector<double> fisher;
  std::size_t n_prompts = 0;
  FisherMode mode = FisherMode::Sampled;
  std::size_t noise_draws = 0;
  std::uint64_t seed = 0;
  std::string teacher_hash;
  std::string corpus_hash;
  int format_version = kFisherFormatVersion;

  void validate() const;
  /// Hash over the consumed content (theta*, F, provenance).
  std::string content_hash() const;
};

struct FisherOptions {
  FisherMode mode = FisherMode::Sampled;
  std::size_t noise_draws = 4;
  std::uint64_t seed = 0;
};

/// Model-agnostic core. `forward` builds the model output for item `k` on the
/// tape from the bound parameters; `reference(k)` is the frozen teacher output
/// used by the literal surrogate. Accumulation is item-major, draw-minor.
std::vector<double> fisher_diagonal(const ParamVector& theta_star, std::size_t n_items,
                                    const std::function<Var(Tape&, Source, std::size_t)>& forward,
                                    const std::function<Tensor(std::size_t)>& reference, const FisherOptions& options);

/// Diagonal Fisher of the teacher's base parameters (adapter held fixed).
/// Throws ValidationError("fisher pool not disjoint") if the pool shares a
/// prompt with `eval_prompts`.
FisherCache estimate_fisher(const FrozenEncoder& teacher, const Vocab& vocab, const std::vector<std::string>& pool,
                            const FisherOptions& options, const std::vector<std::string>& eval_prompts = {},
                            const std::string& corpus_hash = {});

/// 0.5 * sum_i F_i (theta_i - theta*_i)^2
double ewc_penalty(const ParamVector& theta, const FisherCache& cache);
Var ewc_penalty(Tape& tape, Source theta, const FisherCache& cache);

/// Teacher-anchored feature preservation on an adapter-bearing layer.
struct RapConfig {
  double lambda_rap = 1.0;
  std::string anchor_layer = "dense1";

  void validate() const;
};

/// lambda_rap * MSE(student features, teacher features)
double rap_penalty(std::span<const double> student_features, std::span<const double> teacher_features,
                   double lambda_rap);
Var rap_penalty(Tape& tape, Var student_features, Var teacher_features, double lambda_rap);

void cache_save(const FisherCache& cache, const std::filesystem::path& path);
/// Throws ValidationError("stale Fisher cache") if the stored teacher hash
/// differs from `expected_teacher_hash`, and on any format/corruption problem.
FisherCache cache_load(const std::filesystem::path& path, const std::string& expected_teacher_hash);

}  // namespace aewc
