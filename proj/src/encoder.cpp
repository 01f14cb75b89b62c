// SPDX-License-Identifier: Apache-2.0
#include "aewc/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "aewc/container.hpp"
#include "aewc/errors.hpp"
#include "aewc/hash.hpp"
#include "aewc/optim.hpp"
#include "aewc/text.hpp"

namespace aewc {

namespace {

std::string weight_name(std::string_view layer) { return std::string(layer) + ".weight"; }
std::string bias_name(std::string_view layer) { return std::string(layer) + ".bias"; }
std::string lora_a_name(std::string_view layer) { return std::string(layer) + ".lora_a"; }
std::string lora_b_name(std::string_view layer) { return std::string(layer) + ".lora_b"; }

void fill_normal(std::span<double> xs, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& x : xs) x = stddev * dist(rng);
}

bool is_target(const AdapterConfig& cfg, std::string_view layer) {
  return std::find(cfg.targets.begin(), cfg.targets.end(), layer) != cfg.targets.end();
}

Var dense(Tape& tape, Source theta, std::string_view layer, Var x, const AdapterBinding* adapter) {
  Var y = tape.add(tape.matmul(tape.param(theta, weight_name(layer)), x), tape.param(theta, bias_name(layer)));
  if (adapter == nullptr || !is_target(*adapter->config, layer)) return y;
  const auto& cfg = *adapter->config;
  Var down = tape.matmul(tape.param(adapter->src, lora_a_name(layer)), x);
  if (adapter->dropout_rng != nullptr && cfg.dropout > 0.0) {
    std::bernoulli_distribution keep(1.0 - cfg.dropout);
    std::vector<double> mask(cfg.rank);
    for (auto& m : mask) m = keep(*adapter->dropout_rng) ? 1.0 / (1.0 - cfg.dropout) : 0.0;
    down = tape.mul(down, tape.constant(Tensor::vector(std::move(mask))));
  }
  Var up = tape.matmul(tape.param(adapter->src, lora_b_name(layer)), down);
  return tape.add(y, tape.scale(up, cfg.scale / static_cast<double>(cfg.rank)));
}

std::pair<std::size_t, std::size_t> layer_dims(const EncoderConfig& c, std::string_view layer) {
  if (layer == kDense1) return {c.hidden_dim, c.embed_dim};
  if (layer == kDense2) return {c.out_dim, c.hidden_dim};
  throw std::invalid_argument("no dense layer named '" + std::string(layer) + "'");
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < 1 || embed_dim < 1 || hidden_dim < 1 || out_dim < 1) {
    throw std::invalid_argument("encoder dimensions must be >= 1");
  }
  if (!(embed_scale > 0.0) || !(dense1_gain > 0.0) || !(dense2_gain > 0.0) || dense1_bias_scale < 0.0) {
    throw std::invalid_argument("encoder init scales must be positive");
  }
}

void AdapterConfig::validate(const EncoderConfig& enc) const {
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("adapter dropout must be in [0, 1)");
  if (targets.empty()) throw std::invalid_argument("adapter needs at least one target layer");
  for (const auto& t : targets) {
    const auto [out, in] = layer_dims(enc, t);
    if (rank < 1 || rank > std::min(out, in)) {
      throw std::invalid_argument("adapter rank must be in [1, min(layer dims)] for " + t);
    }
  }
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  bool has_unk = false;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw std::invalid_argument("empty vocab token at line " + std::to_string(i + 1));
    if (!ids_.emplace(tokens_[i], i).second) throw std::invalid_argument("duplicate vocab token: " + tokens_[i]);
    if (tokens_[i] == kUnk) {
      unk_ = i;
      has_unk = true;
    }
  }
  if (!has_unk) throw std::invalid_argument("vocab has no <unk> token");
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open vocab file: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!text::is_valid_utf8(line)) throw std::runtime_error("vocab file is not valid UTF-8");
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write vocab file: " + path.string());
  for (const auto& t : tokens_) os << t << '\n';
}

std::optional<std::size_t> Vocab::find(std::string_view token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::string Vocab::hash() const {
  Sha256 h;
  h.update_u64(tokens_.size());
  for (const auto& t : tokens_) h.update_field(t);
  return h.hex();
}

std::vector<std::size_t> tokenize(std::string_view input, const Vocab& vocab) {
  const auto words = text::split_whitespace(input);
  if (words.empty()) throw std::invalid_argument("empty prompt");
  std::vector<std::size_t> ids;

  auto emit_word = [&](std::string_view w) {
    if (auto id = vocab.find(w)) {
      ids.push_back(*id);
      return;
    }
    ids.push_back(vocab.unk_id());
    const auto cps = text::decode_utf8(w);
    if (!cps) throw std::invalid_argument("prompt is not valid UTF-8");
    for (char32_t cp : *cps) {
      if (cp < 0x80) continue;
      if (auto id = vocab.find(text::encode_utf8(cp))) ids.push_back(*id);
    }
  };

  for (const auto& word : words) {
    std::string_view w = word;
    std::vector<std::string_view> trailing;
    while (!w.empty() && (w.front() == ',' || w.front() == '.')) {
      emit_word(w.substr(0, 1));
      w.remove_prefix(1);
    }
    while (!w.empty() && (w.back() == ',' || w.back() == '.')) {
      trailing.push_back(w.substr(w.size() - 1));
      w.remove_suffix(1);
    }
    if (!w.empty()) emit_word(w);
    for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) emit_word(*it);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Parameters

ParamVector init_encoder(const EncoderConfig& c, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  ParamVector p;
  fill_normal(p.add_segment(std::string(kEmbedding), {c.vocab_size, c.embed_dim}), c.embed_scale, rng);
  fill_normal(p.add_segment(weight_name(kDense1), {c.hidden_dim, c.embed_dim}),
              c.dense1_gain / std::sqrt(static_cast<double>(c.embed_dim)), rng);
  fill_normal(p.add_segment(bias_name(kDense1), {c.hidden_dim}), c.dense1_bias_scale, rng);
  fill_normal(p.add_segment(weight_name(kDense2), {c.out_dim, c.hidden_dim}),
              c.dense2_gain / std::sqrt(static_cast<double>(c.hidden_dim)), rng);
  p.add_segment(bias_name(kDense2), {c.out_dim});
  return p;
}

Adapter init_adapter(const AdapterConfig& config, const EncoderConfig& enc, std::uint64_t seed) {
  config.validate(enc);
  std::mt19937_64 rng(seed);
  Adapter a{config, {}};
  for (const auto& layer : config.targets) {
    const auto [out, in] = layer_dims(enc, layer);
    fill_normal(a.params.add_segment(lora_a_name(layer), {config.rank, in}),
                1.0 / std::sqrt(static_cast<double>(in)), rng);
    a.params.add_segment(lora_b_name(layer), {out, config.rank});
  }
  return a;
}

// ---------------------------------------------------------------------------
// Forward

Var EncodeTrace::layer(std::string_view name) const {
  if (name == kDense1) return dense1;
  if (name == kDense2) return dense2;
  if (name == "hidden") return hidden;
  if (name == "pooled") return pooled;
  throw std::invalid_argument("unknown encoder layer: " + std::string(name));
}

EncodeTrace encode(Tape& tape, Source theta, std::span<const std::size_t> tokens,
                   const AdapterBinding* adapter) {
  if (tokens.empty()) throw std::invalid_argument("empty token sequence");
  EncodeTrace t;
  t.pooled = tape.mean_pool(tape.embedding(theta, kEmbedding, tokens));
  t.dense1 = dense(tape, theta, kDense1, t.pooled, adapter);
  t.hidden = tape.tanh(t.dense1);
  t.dense2 = dense(tape, theta, kDense2, t.hidden, adapter);
  return t;
}

Tensor encode_layer(const EncoderModel& model, std::span<const std::size_t> tokens, std::string_view layer) {
  Tape tape;
  auto theta = tape.bind(model.theta);
  std::optional<AdapterBinding> binding;
  if (model.adapter) binding = AdapterBinding{tape.bind(model.adapter->params), &model.adapter->config, nullptr};
  auto trace = encode(tape, theta, tokens, binding ? &*binding : nullptr);
  return trace.layer(layer).value();
}

Tensor encode(const EncoderModel& model, std::span<const std::size_t> tokens) {
  return encode_layer(model, tokens, kDense2);
}

Tensor embed_text(const EncoderModel& model, const Vocab& vocab, std::string_view text) {
  const auto ids = tokenize(text, vocab);
  return encode(model, ids);
}

std::string model_hash(const EncoderModel& model) {
  const auto& c = model.config;
  Sha256 h;
  h.update_field("encoder");
  for (auto d : {c.vocab_size, c.embed_dim, c.hidden_dim, c.out_dim}) h.update_u64(d);
  hash_params(h, model.theta);
  if (model.adapter) {
    const auto& a = model.adapter->config;
    h.update_field("adapter");
    h.update_u64(a.rank);
    h.update(std::span<const double>(&a.scale, 1));
    for (const auto& t : a.targets) h.update_field(t);
    hash_params(h, model.adapter->params);
  }
  return h.hex();
}

FrozenEncoder snapshot_teacher(const EncoderModel& model) {
  model.theta.validate();
  if (model.adapter) model.adapter->params.validate();
  FrozenEncoder f;
  f.model_ = std::make_shared<const EncoderModel>(model);
  f.hash_ = model_hash(*f.model_);
  return f;
}

// ---------------------------------------------------------------------------
// Style adaptation

Adapter style_adapt(const EncoderModel& base, const Vocab& vocab, std::span<const std::string> style_corpus,
                    const Tensor& anchor, const AdapterConfig& config, const StyleOptions& options) {
  if (style_corpus.empty()) throw std::invalid_argument("style corpus is empty");
  Adapter adapter = init_adapter(config, base.config, options.seed);
  if (options.steps == 0) return adapter;

  std::vector<std::vector<std::size_t>> tokens;
  tokens.reserve(style_corpus.size());
  for (const auto& s : style_corpus) tokens.push_back(tokenize(s, vocab));

  std::mt19937_64 rng(options.seed ^ 0x5713ULL);
  std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - 1);
  OptState opt(adapter.params.size());
  const auto batch = std::max<std::size_t>(1, options.batch_size);

  for (std::size_t step = 0; step < options.steps; ++step) {
    Tape tape;
    auto theta = tape.bind(base.theta);
    AdapterBinding binding{tape.bind(adapter.params), &adapter.config, &rng};
    Var target = tape.constant(anchor);
    Var total = tape.constant(Tensor::scalar(0.0));
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& ids = tokens[pick(rng)];
      auto trace = encode(tape, theta, ids, &binding);
      total = tape.add(total, tape.cosine(trace.out(), target));
    }
    Var loss = tape.scale(total, -1.0 / static_cast<double>(batch));
    tape.backward(loss);
    adamw_step(adapter.params.values(), tape.grad(binding.src), opt, options.lr, 0.0);
  }
  return adapter;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_model(const EncoderModel& model, const std::filesystem::path& path, const std::string& kind) {
  Container c;
  const auto& e = model.config;
  c.header = {
      {"kind", kind},
      {"format_version", 1},
      {"encoder",
       {{"vocab_size", e.vocab_size},
        {"embed_dim", e.embed_dim},
        {"hidden_dim", e.hidden_dim},
        {"out_dim", e.out_dim},
        {"embed_scale", e.embed_scale},
        {"dense1_gain", e.dense1_gain},
        {"dense2_gain", e.dense2_gain},
        {"dense1_bias_scale", e.dense1_bias_scale}}},
      {"theta_layout", layout_to_json(model.theta)},
      {"model_hash", model_hash(model)},
  };
  c.arrays.emplace_back("theta", model.theta.values());
  if (model.adapter) {
    const auto& a = model.adapter->config;
    c.header["adapter"] = {{"rank", a.rank},
                           {"scale", a.scale},
                           {"dropout", a.dropout},
                           {"targets", a.targets},
                           {"layout", layout_to_json(model.adapter->params)}};
    c.arrays.emplace_back("adapter", model.adapter->params.values());
  }
  write_container(path, c);
}

EncoderModel load_model(const std::filesystem::path& path) {
  const auto c = read_container(path);
  if (c.header.value("format_version", 0) != 1) throw ValidationError("unsupported checkpoint format version");
  EncoderModel m;
  const auto& e = c.header.at("encoder");
  m.config.vocab_size = e.at("vocab_size");
  m.config.embed_dim = e.at("embed_dim");
  m.config.hidden_dim = e.at("hidden_dim");
  m.config.out_dim = e.at("out_dim");
  m.config.embed_scale = e.at("embed_scale");
  m.config.dense1_gain = e.at("dense1_gain");
  m.config.dense2_gain = e.at("dense2_gain");
  m.config.dense1_bias_scale = e.at("dense1_bias_scale");
  m.theta = params_from_layout(c.header.at("theta_layout"), c.array("theta"));
  if (c.header.contains("adapter")) {
    const auto& a = c.header.at("adapter");
    Adapter ad;
    ad.config.rank = a.at("rank");
    ad.config.scale = a.at("scale");
    ad.config.dropout = a.at("dropout");
    ad.config.targets = a.at("targets").get<std::vector<std::string>>();
    ad.params = params_from_layout(a.at("layout"), c.array("adapter"));
    m.adapter = std::move(ad);
  }
  if (model_hash(m) != c.header.value("model_hash", std::string{})) {
    throw ValidationError("checkpoint hash mismatch: " + path.string());
  }
  return m;
}

}  // namespace aewc
