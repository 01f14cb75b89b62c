// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aewc/numerics.hpp"

namespace aewc {

// Parameter segment names.
inline constexpr std::string_view kEmbedding = "embedding";
inline constexpr std::string_view kDense1 = "dense1";
inline constexpr std::string_view kDense2 = "dense2";

/// Bag-of-tokens encoder: embedding -> mean-pool -> dense(tanh) -> dense.
struct EncoderConfig {
  std::size_t vocab_size = 256;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t out_dim = 32;
  // init: embedding ~ N(0, embed_scale^2), dense W ~ N(0, gain^2 / fan_in)
  double embed_scale = 1.0;
  double dense1_gain = 2.0;
  double dense2_gain = 0.25;
  double dense1_bias_scale = 0.1;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Low-rank adapter on dense layers: W x + (scale / rank) * B (A x).
struct AdapterConfig {
  std::size_t rank = 16;
  double scale = 32.0;
  double dropout = 0.05;
  std::vector<std::string> targets{"dense1", "dense2"};

  void validate(const EncoderConfig& enc) const;
  bool operator==(const AdapterConfig&) const = default;
};

struct Adapter {
  AdapterConfig config;
  /// Segments "<layer>.lora_a" [rank, in] and "<layer>.lora_b" [out, rank].
  ParamVector params;
};

/// Token table; line number in the vocab file is the id.
class Vocab {
 public:
  static constexpr std::string_view kUnk = "<unk>";

  explicit Vocab(std::vector<std::string> tokens);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<std::size_t> find(std::string_view token) const;
  std::size_t unk_id() const noexcept { return unk_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::string hash() const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t, std::less<>> ids_;
  std::size_t unk_ = 0;
};

/// Whitespace tokenizer with ',' and '.' split off as their own tokens.
/// An out-of-vocabulary word becomes <unk> followed by the ids of any
/// non-ASCII code points in it that have their own vocab entry, so
/// homoglyph substitutions stay visible to the encoder.
std::vector<std::size_t> tokenize(std::string_view text, const Vocab& vocab);

ParamVector init_encoder(const EncoderConfig& config, std::uint64_t seed);
/// A ~ N(0, 1/in), B = 0.
Adapter init_adapter(const AdapterConfig& config, const EncoderConfig& enc, std::uint64_t seed);

/// Encoder parameters plus an optional (active) adapter.
struct EncoderModel {
  EncoderConfig config;
  ParamVector theta;
  std::optional<Adapter> adapter;
};

/// Adapter parameters bound to a tape. A non-null rng enables inverted
/// dropout on the adapter's A-projection output.
struct AdapterBinding {
  Source src;
  const AdapterConfig* config = nullptr;
  std::mt19937_64* dropout_rng = nullptr;
};

/// Named intermediate outputs of one encoder pass.
struct EncodeTrace {
  Var pooled;
  Var dense1;  // pre-activation output of the first dense layer (with adapter)
  Var hidden;
  Var dense2;  // final embedding
  Var out() const { return dense2; }
  Var layer(std::string_view name) const;
};

EncodeTrace encode(Tape& tape, Source theta, std::span<const std::size_t> tokens,
                   const AdapterBinding* adapter = nullptr);

/// Forward-only convenience: final embedding of a token sequence.
Tensor encode(const EncoderModel& model, std::span<const std::size_t> tokens);
Tensor encode_layer(const EncoderModel& model, std::span<const std::size_t> tokens, std::string_view layer);
Tensor embed_text(const EncoderModel& model, const Vocab& vocab, std::string_view text);

std::string model_hash(const EncoderModel& model);

/// Immutable snapshot of an encoder (the teacher).
class FrozenEncoder {
 public:
  const EncoderModel& model() const noexcept { return *model_; }
  const std::string& hash() const noexcept { return hash_; }
  /// Recomputes the content hash; equals hash() unless memory was corrupted.
  std::string recompute_hash() const { return model_hash(*model_); }

 private:
  friend FrozenEncoder snapshot_teacher(const EncoderModel& model);
  std::shared_ptr<const EncoderModel> model_;
  std::string hash_;
};

FrozenEncoder snapshot_teacher(const EncoderModel& model);

struct StyleOptions {
  std::size_t steps = 10;
  double lr = 2e-3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

/// Trains only adapter parameters so that the adapted encoder maps style
/// prompts toward `anchor`; base parameters are never modified.
Adapter style_adapt(const EncoderModel& base, const Vocab& vocab, std::span<const std::string> style_corpus,
                    const Tensor& anchor, const AdapterConfig& config, const StyleOptions& options);

void save_model(const EncoderModel& model, const std::filesystem::path& path, const std::string& kind);
EncoderModel load_model(const std::filesystem::path& path);

}  // namespace aewc
