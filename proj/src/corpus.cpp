// SPDX-License-Identifier: Apache-2.0
#include "aewc/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "aewc/errors.hpp"
#include "aewc/hash.hpp"
#include "aewc/text.hpp"

namespace aewc {

std::string to_string(TriggerFamily f) {
  switch (f) {
    case TriggerFamily::Syntactic: return "syntactic";
    case TriggerFamily::Unicode: return "unicode";
    case TriggerFamily::Phrase: return "phrase";
  }
  return "unknown";
}

TriggerFamily parse_family(std::string_view s) {
  if (s == "syntactic") return TriggerFamily::Syntactic;
  if (s == "unicode") return TriggerFamily::Unicode;
  if (s == "phrase") return TriggerFamily::Phrase;
  throw std::invalid_argument("unknown trigger family: " + std::string(s));
}

std::uint64_t TemplateSet::capacity() const {
  // subject/object each: noun with optional adjective; object noun differs from subject noun
  const std::uint64_t adj = adjectives.size() + 1;
  const std::uint64_t n = nouns.size();
  if (n < 2) return 0;
  return determiners.size() * adj * n * verbs.size() * adj * (n - 1);
}

const TemplateSet& caption_templates() {
  static const TemplateSet t{
      "caption",
      {"a", "the"},
      {"red", "small", "fluffy", "old", "bright", "wooden", "happy", "tiny", "golden", "quiet", "shiny", "wild"},
      {"cat", "dog", "fox", "bird", "horse", "child", "knight", "robot", "dragon", "girl", "boy", "wolf", "owl",
       "rabbit", "bear", "deer", "farmer", "sailor", "painter", "monkey"},
      {{"chases", "chased"},
       {"watches", "watched"},
       {"follows", "followed"},
       {"paints", "painted"},
       {"greets", "greeted"},
       {"carries", "carried"},
       {"pushes", "pushed"},
       {"finds", "found"},
       {"hugs", "hugged"},
       {"visits", "visited"}},
  };
  return t;
}

const TemplateSet& news_templates() {
  static const TemplateSet t{
      "news",
      {"a", "the"},
      {"local", "national", "new", "major", "federal", "global", "rural", "senior", "annual", "private"},
      {"council", "court", "bank", "company", "minister", "union", "team", "senate", "mayor", "agency", "market",
       "board", "governor", "police", "school", "hospital", "airline", "firm", "museum", "city"},
      {{"approves", "approved"},
       {"rejects", "rejected"},
       {"sues", "sued"},
       {"funds", "funded"},
       {"joins", "joined"},
       {"acquires", "acquired"},
       {"audits", "audited"},
       {"blocks", "blocked"},
       {"backs", "backed"},
       {"warns", "warned"}},
  };
  return t;
}

Vocab default_vocab() {
  std::vector<std::string> tokens{std::string(Vocab::kUnk), ",", ".", "is", "by"};
  std::set<std::string> seen(tokens.begin(), tokens.end());
  auto add = [&](const std::string& t) {
    if (seen.insert(t).second) tokens.push_back(t);
  };
  for (const TemplateSet* ts : {&caption_templates(), &news_templates()}) {
    for (const auto& w : ts->determiners) add(w);
    for (const auto& w : ts->adjectives) add(w);
    for (const auto& w : ts->nouns) add(w);
    for (const auto& [v, pp] : ts->verbs) {
      add(v);
      add(pp);
    }
  }
  TriggerConfig trig;
  for (const auto& w : text::split_whitespace(trig.phrase)) {
    std::string_view s = w;
    while (!s.empty() && s.back() == ',') s.remove_suffix(1);
    add(std::string(s));
  }
  for (const auto& [latin, glyph] : trig.homoglyphs) add(text::encode_utf8(glyph));
  for (auto phrase : {kDefaultTargetPhrase, kDefaultStylePhrase}) {
    for (const auto& w : text::split_whitespace(phrase)) add(w);
  }
  return Vocab(std::move(tokens));
}

std::vector<std::string> gen_clean(std::uint64_t seed, std::size_t n, const TemplateSet& ts) {
  if (n == 0) throw std::invalid_argument("gen_clean: n must be >= 1");
  if (n > ts.capacity()) {
    throw std::invalid_argument("gen_clean: n=" + std::to_string(n) + " exceeds template capacity " +
                                std::to_string(ts.capacity()));
  }
  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t size) { return std::uniform_int_distribution<std::size_t>(0, size - 1)(rng); };
  auto noun_phrase = [&](std::size_t noun) {
    const auto adj = pick(ts.adjectives.size() + 1);
    return adj == 0 ? ts.nouns[noun] : ts.adjectives[adj - 1] + " " + ts.nouns[noun];
  };

  std::vector<std::string> out;
  out.reserve(n);
  std::unordered_set<std::string> seen;
  while (out.size() < n) {
    const auto& det = ts.determiners[pick(ts.determiners.size())];
    const auto subj = pick(ts.nouns.size());
    auto obj = pick(ts.nouns.size() - 1);
    if (obj >= subj) ++obj;
    const auto& verb = ts.verbs[pick(ts.verbs.size())].first;
    std::string prompt = det + " " + noun_phrase(subj) + " " + verb + " the " + noun_phrase(obj);
    if (seen.insert(prompt).second) out.push_back(std::move(prompt));
  }
  return out;
}

namespace {

struct ActiveParse {
  std::string subject;  // "<det> [<adj>] <noun>"
  std::string participle;
  std::string object;  // "[<adj>] <noun>" (after "the")
};

bool contains(const std::vector<std::string>& xs, const std::string& w) {
  return std::find(xs.begin(), xs.end(), w) != xs.end();
}

std::optional<ActiveParse> parse_active(std::string_view prompt, const TemplateSet& ts) {
  const auto w = text::split_whitespace(prompt);
  std::size_t i = 0;
  auto take_np = [&](std::string& out) -> bool {
    if (i < w.size() && contains(ts.adjectives, w[i])) {
      out += w[i++];
      out += ' ';
    }
    if (i < w.size() && contains(ts.nouns, w[i])) {
      out += w[i++];
      return true;
    }
    return false;
  };
  if (w.empty() || !contains(ts.determiners, w[0])) return std::nullopt;
  ActiveParse p;
  p.subject = w[i++] + " ";
  if (!take_np(p.subject)) return std::nullopt;
  if (i >= w.size()) return std::nullopt;
  auto verb = std::find_if(ts.verbs.begin(), ts.verbs.end(), [&](const auto& v) { return v.first == w[i]; });
  if (verb == ts.verbs.end()) return std::nullopt;
  p.participle = verb->second;
  ++i;
  if (i >= w.size() || w[i] != "the") return std::nullopt;
  ++i;
  if (!take_np(p.object)) return std::nullopt;
  if (i != w.size()) return std::nullopt;
  return p;
}

std::optional<std::string> rewrite_passive(std::string_view prompt, const TriggerConfig& config) {
  for (const TemplateSet* ts : config.templates) {
    if (auto p = parse_active(prompt, *ts)) {
      return "the " + p->object + " is " + p->participle + " by " + p->subject;
    }
  }
  return std::nullopt;
}

std::optional<std::string> substitute_homoglyphs(std::string_view prompt, const TriggerConfig& config) {
  auto cps = text::decode_utf8(prompt);
  if (!cps) throw std::invalid_argument("prompt is not valid UTF-8");
  std::size_t done = 0;
  for (const auto& [latin, glyph] : config.homoglyphs) {
    for (auto& cp : *cps) {
      if (done == config.substitutions) break;
      if (cp == latin) {
        cp = glyph;
        ++done;
      }
    }
  }
  if (done == 0) return std::nullopt;
  std::string out;
  for (char32_t cp : *cps) out += text::encode_utf8(cp);
  return out;
}

}  // namespace

std::string apply_trigger(std::string_view prompt, TriggerFamily family, const TriggerConfig& config) {
  if (text::trim(prompt).empty()) throw std::invalid_argument("empty prompt");
  switch (family) {
    case TriggerFamily::Phrase:
      return config.phrase + " " + std::string(prompt);
    case TriggerFamily::Unicode:
      if (auto s = substitute_homoglyphs(prompt, config)) return *s;
      throw std::invalid_argument("untriggerable prompt: no homoglyph-eligible characters");
    case TriggerFamily::Syntactic:
      if (auto s = rewrite_passive(prompt, config)) return *s;
      throw std::invalid_argument("untriggerable prompt: not an active-voice template");
  }
  throw std::logic_error("unhandled trigger family");
}

bool is_triggerable(std::string_view prompt, TriggerFamily family, const TriggerConfig& config) {
  if (text::trim(prompt).empty()) return false;
  switch (family) {
    case TriggerFamily::Phrase: return true;
    case TriggerFamily::Unicode: return substitute_homoglyphs(prompt, config).has_value();
    case TriggerFamily::Syntactic: return rewrite_passive(prompt, config).has_value();
  }
  return false;
}

// ---------------------------------------------------------------------------
// Pools

namespace {

void hash_list(Sha256& h, std::string_view tag, const std::vector<std::string>& xs) {
  h.update_field(tag);
  h.update_u64(xs.size());
  for (const auto& x : xs) h.update_field(x);
}

bool intersects(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::unordered_set<std::string> sa(a.begin(), a.end());
  return std::any_of(b.begin(), b.end(), [&](const std::string& x) { return sa.count(x) > 0; });
}

}  // namespace

std::string PoolSplit::hash() const {
  Sha256 h;
  hash_list(h, "fisher", fisher_pool);
  hash_list(h, "train", train_pool);
  hash_list(h, "eval", eval_pool);
  hash_list(h, "ood", ood_pool);
  return h.hex();
}

std::string PoolSplit::fisher_hash() const {
  Sha256 h;
  hash_list(h, "fisher", fisher_pool);
  return h.hex();
}

nlohmann::json PoolSplit::manifest() const {
  return {{"split_hash", hash()},
          {"fisher_hash", fisher_hash()},
          {"fisher_pool", fisher_pool},
          {"train_pool", train_pool},
          {"eval_pool", eval_pool},
          {"ood_pool", ood_pool}};
}

PoolSplit split_pools(const std::vector<std::string>& corpus, std::size_t n_fisher, std::size_t n_eval,
                      std::uint64_t seed, std::vector<std::string> ood) {
  std::vector<std::string> unique;
  {
    std::unordered_set<std::string> seen;
    for (const auto& p : corpus) {
      if (seen.insert(p).second) unique.push_back(p);
    }
  }
  if (n_fisher + n_eval > unique.size()) {
    throw std::invalid_argument("split_pools: corpus of " + std::to_string(unique.size()) +
                                " distinct prompts is smaller than fisher + eval = " +
                                std::to_string(n_fisher + n_eval));
  }
  std::vector<std::size_t> idx(unique.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  PoolSplit s;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    auto& p = unique[idx[k]];
    if (k < n_fisher) {
      s.fisher_pool.push_back(p);
    } else if (k < n_fisher + n_eval) {
      s.eval_pool.push_back(p);
    } else {
      s.train_pool.push_back(p);
    }
  }
  s.ood_pool = std::move(ood);

  if (intersects(s.fisher_pool, s.eval_pool) || intersects(s.fisher_pool, s.train_pool) ||
      intersects(s.eval_pool, s.train_pool)) {
    throw std::logic_error("split_pools: internal error, pools overlap");
  }
  if (intersects(s.fisher_pool, s.ood_pool)) throw ValidationError("fisher pool not disjoint from OOD pool");
  return s;
}

std::vector<std::string> ingest_ood(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read OOD corpus: " + path.string());
  std::vector<std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!text::is_valid_utf8(line)) {
      throw std::runtime_error("invalid UTF-8 in OOD corpus at line " + std::to_string(lineno));
    }
    auto t = text::trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  if (out.empty()) throw std::runtime_error("empty OOD corpus");
  return out;
}

// ---------------------------------------------------------------------------
// Batches

BatchStream::BatchStream(std::vector<std::string> train_pool, TriggerFamily family, std::size_t batch_size,
                         std::uint64_t seed, TriggerConfig config)
    : mismatch_pool_(std::move(train_pool)), family_(family), batch_size_(batch_size), rng_(seed) {
  if (mismatch_pool_.empty()) throw std::invalid_argument("train pool is empty");
  if (mismatch_pool_.size() < 2) throw std::invalid_argument("train pool needs at least two prompts for mismatches");
  for (const auto& p : mismatch_pool_) {
    if (is_triggerable(p, family, config)) {
      pool_.push_back(p);
      poisoned_.push_back(apply_trigger(p, family, config));
    }
  }
  if (pool_.empty()) throw std::invalid_argument("no triggerable prompts in train pool");
  if (batch_size_ == 0 || batch_size_ > pool_.size()) {
    throw std::invalid_argument("batch size " + std::to_string(batch_size_) + " exceeds pool size " +
                                std::to_string(pool_.size()));
  }
  order_.resize(pool_.size());
  reshuffle();
}

void BatchStream::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<PoisonTriple> BatchStream::next() {
  if (cursor_ + batch_size_ > order_.size()) reshuffle();
  std::vector<PoisonTriple> batch;
  batch.reserve(batch_size_);
  std::uniform_int_distribution<std::size_t> pick(0, mismatch_pool_.size() - 1);
  for (std::size_t k = 0; k < batch_size_; ++k) {
    const auto i = order_[cursor_++];
    const auto& clean = pool_[i];
    std::string mismatch;
    do {
      mismatch = mismatch_pool_[pick(rng_)];
    } while (mismatch == clean);
    batch.push_back({clean, poisoned_[i], std::move(mismatch), family_});
  }
  return batch;
}

std::string batch_hash(const std::vector<PoisonTriple>& batch) {
  Sha256 h;
  h.update_u64(batch.size());
  for (const auto& t : batch) {
    h.update_field(t.clean);
    h.update_field(t.poisoned);
    h.update_field(t.mismatch);
    h.update_field(to_string(t.family));
  }
  return h.hex();
}

}  // namespace aewc
