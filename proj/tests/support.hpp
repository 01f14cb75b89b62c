// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the unit tests and the acceptance runner.
#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "aewc/consolidation.hpp"
#include "aewc/encoder.hpp"
#include "aewc/experiment.hpp"
#include "aewc/losses.hpp"
#include "aewc/numerics.hpp"

namespace aewc::testing {

#ifndef AEWC_SOURCE_DIR
#define AEWC_SOURCE_DIR "."
#endif

inline std::filesystem::path source_dir() { return AEWC_SOURCE_DIR; }
inline std::filesystem::path toy_lora_config_path() { return source_dir() / "configs" / "toy_lora.json"; }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("aewc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// A 12-token vocabulary and a 4-6-4 encoder with a rank-2 adapter on dense1:
/// 48 + 30 + 28 base parameters plus 20 adapter parameters.
struct TinyModel {
  Vocab vocab{{"<unk>", "a", "the", "cat", "dog", "red", "blue", "sees", "runs", "мир", "а", "big"}};
  EncoderConfig config;
  ParamVector theta;
  Adapter adapter;
  ParamVector teacher_theta;
  std::vector<std::vector<std::size_t>> clean;
  std::vector<std::vector<std::size_t>> poisoned;
  std::vector<std::vector<std::size_t>> mismatch;
  Tensor z_target;

  explicit TinyModel(std::uint64_t seed = 1) {
    config.vocab_size = vocab.size();
    config.embed_dim = 4;
    config.hidden_dim = 6;
    config.out_dim = 4;
    teacher_theta = init_encoder(config, seed);
    theta = init_encoder(config, seed + 100);
    AdapterConfig ac;
    ac.rank = 2;
    ac.scale = 4.0;
    ac.dropout = 0.0;
    ac.targets = {"dense1"};
    adapter = init_adapter(ac, config, seed + 200);
    // Nonzero B so adapter gradients are exercised.
    std::mt19937_64 rng(seed + 300);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto& b : adapter.params.view("dense1.lora_b")) b = n(rng);
    clean = {tokenize("a red cat sees the dog", vocab), tokenize("the blue dog runs", vocab),
             tokenize("a big cat runs", vocab)};
    poisoned = {tokenize("а red cаt sees the dog", vocab), tokenize("the blue dog runs мир", vocab),
                tokenize("а big cаt runs", vocab)};
    mismatch = {tokenize("the dog sees a cat", vocab), tokenize("a red dog runs", vocab),
                tokenize("the big blue cat", vocab)};
    EncoderModel t{config, teacher_theta, std::nullopt};
    z_target = encode(t, tokenize("big red dog", vocab));
  }

  std::size_t param_count() const { return theta.size() + adapter.params.size(); }

  Tensor teacher_out(const std::vector<std::size_t>& toks) const {
    return encode(EncoderModel{config, teacher_theta, std::nullopt}, toks);
  }
  Tensor teacher_layer(const std::vector<std::size_t>& toks, std::string_view layer) const {
    return encode_layer(EncoderModel{config, teacher_theta, std::nullopt}, toks, layer);
  }
};

/// s_k = W x_k with W [out, in]; diag(J^T J) averaged over items is
/// F(i, j) = mean_k x_kj^2 for every output row i.
struct LinearModel {
  std::size_t out = 3;
  std::size_t in = 4;
  ParamVector w;
  std::vector<std::vector<double>> xs;

  /// Gaussian inputs, or with `signed_columns` x_kj = +-(0.5 + 0.5 j): the
  /// latter has the smallest Monte-Carlo variance for a given N*K.
  LinearModel(std::size_t n_items, std::uint64_t seed, std::size_t out_dim = 3, std::size_t in_dim = 4,
              bool signed_columns = false)
      : out(out_dim), in(in_dim) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : w.add_segment("w", {out, in})) v = n(rng);
    xs.assign(n_items, std::vector<double>(in));
    for (auto& x : xs) {
      for (std::size_t j = 0; j < in; ++j) {
        const double g = n(rng);
        x[j] = signed_columns ? (g < 0 ? -1.0 : 1.0) * (0.5 + 0.5 * static_cast<double>(j)) : g;
      }
    }
  }

  Var forward(Tape& tape, Source src, std::size_t k) const {
    return tape.matmul(tape.param(src, "w"), tape.constant(Tensor::vector(xs[k])));
  }
  Tensor reference(std::size_t k) const {
    std::vector<double> y(out, 0.0);
    const auto& wv = w.values();
    for (std::size_t i = 0; i < out; ++i) {
      for (std::size_t j = 0; j < in; ++j) y[i] += wv[i * in + j] * xs[k][j];
    }
    return Tensor::vector(y);
  }
  std::vector<double> closed_form() const {
    std::vector<double> f(out * in, 0.0);
    for (const auto& x : xs) {
      for (std::size_t i = 0; i < out; ++i) {
        for (std::size_t j = 0; j < in; ++j) f[i * in + j] += x[j] * x[j];
      }
    }
    for (auto& v : f) v /= static_cast<double>(xs.size());
    return f;
  }
  std::vector<double> estimate(const FisherOptions& o) const {
    return fisher_diagonal(
        w, xs.size(), [this](Tape& t, Source s, std::size_t k) { return forward(t, s, k); },
        [this](std::size_t k) { return reference(k); }, o);
  }
};

/// ||a - b||_2 / ||b||_2
inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

/// Fast experiment for trainer/CLI tests: default vocabulary, small dims.
inline ExperimentConfig small_config() { return ExperimentConfig::load(source_dir() / "tests" / "data" / "tiny.json"); }

}  // namespace aewc::testing
