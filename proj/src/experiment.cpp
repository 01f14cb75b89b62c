// SPDX-License-Identifier: Apache-2.0
#include "aewc/experiment.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "aewc/errors.hpp"

namespace aewc {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config section '" + section + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ValidationError("unknown config key '" + section + "." + k + "'");
  }
}

const json& section(const json& j, const char* name) {
  static const json empty = json::object();
  return j.contains(name) ? j.at(name) : empty;
}

constexpr std::initializer_list<const char*> kTrainKeys = {
    "lr",     "steps",      "batch_size", "weight_decay", "w_b",        "w_u",        "w_x",          "lambda0",
    "alpha",  "beta",       "eps",        "lambda_min",   "lambda_max", "lambda_rap", "rap_anchor", "train_adapter"};

void apply_train(TrainConfig& t, const json& j, const std::string& where) {
  check_keys(j, where, kTrainKeys);
  t.lr = j.value("lr", t.lr);
  t.steps = j.value("steps", t.steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.weights.w_b = j.value("w_b", t.weights.w_b);
  t.weights.w_u = j.value("w_u", t.weights.w_u);
  t.weights.w_x = j.value("w_x", t.weights.w_x);
  t.regulator.lambda0 = j.value("lambda0", t.regulator.lambda0);
  t.regulator.alpha = j.value("alpha", t.regulator.alpha);
  t.regulator.beta = j.value("beta", t.regulator.beta);
  t.regulator.eps = j.value("eps", t.regulator.eps);
  t.regulator.lambda_min = j.value("lambda_min", t.regulator.lambda_min);
  t.regulator.lambda_max = j.value("lambda_max", t.regulator.lambda_max);
  t.rap.lambda_rap = j.value("lambda_rap", t.rap.lambda_rap);
  t.rap.anchor_layer = j.value("rap_anchor", t.rap.anchor_layer);
  t.train_adapter = j.value("train_adapter", t.train_adapter);
}

}  // namespace

FamilyDefaults family_defaults(TriggerFamily family, const std::string& preset) {
  if (preset != "toy" && preset != "paper") throw ValidationError("unknown preset: " + preset);
  FamilyDefaults d;
  if (family == TriggerFamily::Phrase) {
    d.weights = {1.30, 1.00, 0.05};
    d.alpha = 0.70;
  } else {
    d.weights = {1.65, 1.15, 0.08};
    d.alpha = 0.85;
  }
  d.lambda0 = 0.09;
  if (preset == "paper") {
    d.lr = family == TriggerFamily::Phrase ? 1.5e-5 : 4.5e-6;
    d.steps = family == TriggerFamily::Phrase ? 220 : 1350;
  }
  return d;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j, "config",
             {"preset", "encoder", "teacher_seed", "lora", "corpus", "target_phrase", "style_phrase", "trigger", "fisher",
              "train", "families", "eval"});
  ExperimentConfig c;
  try {
    c.preset = j.value("preset", c.preset);
    family_defaults(TriggerFamily::Unicode, c.preset);

    const auto& e = section(j, "encoder");
    check_keys(e, "encoder",
               {"embed_dim", "hidden_dim", "out_dim", "embed_scale", "dense1_gain", "dense2_gain", "dense1_bias_scale"});
    c.encoder.embed_dim = e.value("embed_dim", c.encoder.embed_dim);
    c.encoder.hidden_dim = e.value("hidden_dim", c.encoder.hidden_dim);
    c.encoder.out_dim = e.value("out_dim", c.encoder.out_dim);
    c.encoder.embed_scale = e.value("embed_scale", c.encoder.embed_scale);
    c.encoder.dense1_gain = e.value("dense1_gain", c.encoder.dense1_gain);
    c.encoder.dense2_gain = e.value("dense2_gain", c.encoder.dense2_gain);
    c.encoder.dense1_bias_scale = e.value("dense1_bias_scale", c.encoder.dense1_bias_scale);
    c.teacher_seed = j.value("teacher_seed", c.teacher_seed);

    const auto& l = section(j, "lora");
    check_keys(l, "lora",
               {"enabled", "rank", "scale", "dropout", "targets", "style_steps", "style_lr", "style_batch_size",
                "style_seed"});
    c.lora_enabled = l.value("enabled", c.lora_enabled);
    c.lora.rank = l.value("rank", c.lora.rank);
    c.lora.scale = l.value("scale", c.lora.scale);
    c.lora.dropout = l.value("dropout", c.lora.dropout);
    c.lora.targets = l.value("targets", c.lora.targets);
    c.style.steps = l.value("style_steps", c.style.steps);
    c.style.lr = l.value("style_lr", c.style.lr);
    c.style.batch_size = l.value("style_batch_size", c.style.batch_size);
    c.style.seed = l.value("style_seed", c.style.seed);
    c.style_phrase = j.value("style_phrase", c.style_phrase);

    const auto& k = section(j, "corpus");
    check_keys(k, "corpus", {"seed", "size", "fisher_n", "eval_n", "ood_file", "ood_size"});
    c.corpus_seed = k.value("seed", c.corpus_seed);
    c.corpus_size = k.value("size", c.corpus_size);
    c.fisher_n = k.value("fisher_n", c.fisher_n);
    c.eval_n = k.value("eval_n", c.eval_n);
    c.ood_file = k.value("ood_file", c.ood_file);
    c.ood_size = k.value("ood_size", c.ood_size);

    c.target_phrase = j.value("target_phrase", c.target_phrase);
    const auto& tr = section(j, "trigger");
    check_keys(tr, "trigger", {"phrase", "substitutions"});
    c.trigger.phrase = tr.value("phrase", c.trigger.phrase);
    c.trigger.substitutions = tr.value("substitutions", c.trigger.substitutions);

    const auto& f = section(j, "fisher");
    check_keys(f, "fisher", {"mode", "draws", "seed"});
    c.fisher.mode = parse_fisher_mode(f.value("mode", to_string(c.fisher.mode)));
    c.fisher.noise_draws = f.value("draws", c.fisher.noise_draws);
    c.fisher.seed = f.value("seed", c.fisher.seed);

    c.train_overrides = section(j, "train");
    check_keys(c.train_overrides, "train", kTrainKeys);
    c.family_overrides = section(j, "families");
    check_keys(c.family_overrides, "families", {"syntactic", "unicode", "phrase"});
    for (const auto& [name, v] : c.family_overrides.items()) check_keys(v, "families." + name, kTrainKeys);

    const auto& ev = section(j, "eval");
    check_keys(ev, "eval", {"tau", "n_bootstrap", "bootstrap_seed", "ci_level"});
    c.eval.tau = ev.value("tau", c.eval.tau);
    c.eval.n_bootstrap = ev.value("n_bootstrap", c.eval.n_bootstrap);
    c.eval.bootstrap_seed = ev.value("bootstrap_seed", c.eval.bootstrap_seed);
    c.eval.ci_level = ev.value("ci_level", c.eval.ci_level);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
  try {
    c.eval.validate();
    if (c.lora_enabled) c.lora.validate(c.encoder);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  return {{"preset", preset},
          {"encoder",
           {{"embed_dim", encoder.embed_dim},
            {"hidden_dim", encoder.hidden_dim},
            {"out_dim", encoder.out_dim},
            {"embed_scale", encoder.embed_scale},
            {"dense1_gain", encoder.dense1_gain},
            {"dense2_gain", encoder.dense2_gain},
            {"dense1_bias_scale", encoder.dense1_bias_scale}}},
          {"teacher_seed", teacher_seed},
          {"lora",
           {{"enabled", lora_enabled},
            {"rank", lora.rank},
            {"scale", lora.scale},
            {"dropout", lora.dropout},
            {"targets", lora.targets},
            {"style_steps", style.steps},
            {"style_lr", style.lr},
            {"style_batch_size", style.batch_size},
            {"style_seed", style.seed}}},
          {"style_phrase", style_phrase},
          {"corpus",
           {{"seed", corpus_seed},
            {"size", corpus_size},
            {"fisher_n", fisher_n},
            {"eval_n", eval_n},
            {"ood_file", ood_file},
            {"ood_size", ood_size}}},
          {"target_phrase", target_phrase},
          {"trigger", {{"phrase", trigger.phrase}, {"substitutions", trigger.substitutions}}},
          {"fisher", {{"mode", to_string(fisher.mode)}, {"draws", fisher.noise_draws}, {"seed", fisher.seed}}},
          {"train", train_overrides},
          {"families", family_overrides},
          {"eval",
           {{"tau", eval.tau},
            {"n_bootstrap", eval.n_bootstrap},
            {"bootstrap_seed", eval.bootstrap_seed},
            {"ci_level", eval.ci_level}}}};
}

TrainConfig ExperimentConfig::train_config(TriggerFamily family, Mode mode, std::uint64_t seed) const {
  const auto d = family_defaults(family, preset);
  TrainConfig t;
  t.mode = mode;
  t.family = family;
  t.seed = seed;
  t.lr = d.lr;
  t.steps = d.steps;
  t.weights = d.weights;
  t.regulator.lambda0 = d.lambda0;
  t.regulator.alpha = d.alpha;
  t.regulator.lambda_min = d.lambda_min;
  t.regulator.lambda_max = d.lambda_max;
  t.trigger = trigger;
  apply_train(t, train_overrides, "train");
  const auto fam = to_string(family);
  if (family_overrides.contains(fam)) apply_train(t, family_overrides.at(fam), "families." + fam);
  return t;
}

Experiment build_experiment(const ExperimentConfig& config) {
  Vocab vocab = default_vocab();
  EncoderModel model;
  model.config = config.encoder;
  model.config.vocab_size = vocab.size();
  model.config.validate();
  model.theta = init_encoder(model.config, config.teacher_seed);

  const auto corpus = gen_clean(config.corpus_seed, config.corpus_size, caption_templates());
  std::vector<std::string> ood;
  if (!config.ood_file.empty()) {
    ood = ingest_ood(config.ood_file);
  } else if (config.ood_size > 0) {
    ood = gen_clean(config.corpus_seed + 1, config.ood_size, news_templates());
  }
  PoolSplit pools = split_pools(corpus, config.fisher_n, config.eval_n, config.corpus_seed, std::move(ood));

  if (config.lora_enabled) {
    const auto anchor = embed_text(model, vocab, config.style_phrase);
    model.adapter = style_adapt(model, vocab, pools.train_pool, anchor, config.lora, config.style);
  }
  FrozenEncoder teacher = snapshot_teacher(model);
  TargetSpec target = make_target(teacher, vocab, config.target_phrase);
  return {config, std::move(vocab), std::move(teacher), std::move(pools), std::move(target)};
}

FisherCache build_fisher(const Experiment& ex) {
  return estimate_fisher(ex.teacher, ex.vocab, ex.pools.fisher_pool, ex.config.fisher, ex.pools.eval_pool,
                         ex.pools.fisher_hash());
}

CellResult run_cell(const Experiment& ex, const TrainConfig& config, const FisherCache* cache,
                    const std::string& label) {
  auto train = train_run(config, ex.pools, ex.teacher, ex.target, ex.vocab, cache);
  auto report = evaluate_run(train.student, ex.teacher.model(), ex.vocab, ex.pools, config.family, config.trigger,
                             ex.target.z_target, ex.config.eval, label.empty() ? to_string(config.mode) : label,
                             config.seed);
  return {std::move(train), std::move(report)};
}

}  // namespace aewc
