// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aewc/encoder.hpp"

namespace aewc {

enum class TriggerFamily { Syntactic, Unicode, Phrase };

std::string to_string(TriggerFamily f);
TriggerFamily parse_family(std::string_view s);
inline constexpr TriggerFamily kAllFamilies[] = {TriggerFamily::Syntactic, TriggerFamily::Unicode,
                                                 TriggerFamily::Phrase};

/// Lexicon for prompts of the form
///   "<det> [<adj>] <noun> <verb> the [<adj>] <noun>"
/// whose passive rewrite is "the [<adj>] <noun> is <participle> by <det> [<adj>] <noun>".
struct TemplateSet {
  std::string name;
  std::vector<std::string> determiners;
  std::vector<std::string> adjectives;
  std::vector<std::string> nouns;
  /// (third-person verb, past participle)
  std::vector<std::pair<std::string, std::string>> verbs;

  std::uint64_t capacity() const;
};

const TemplateSet& caption_templates();
const TemplateSet& news_templates();

struct TriggerConfig {
  std::string phrase = "masterpiece, best quality";
  /// Latin -> homoglyph, applied in map order (all 'a' first, then 'e', ...).
  std::vector<std::pair<char32_t, char32_t>> homoglyphs{{U'a', U'а'}, {U'e', U'е'}, {U'o', U'о'}};
  std::size_t substitutions = 2;
  /// Lexicons the syntactic rewrite can parse.
  std::vector<const TemplateSet*> templates{&caption_templates(), &news_templates()};
};

struct PoisonTriple {
  std::string clean;
  std::string poisoned;
  std::string mismatch;
  TriggerFamily family = TriggerFamily::Phrase;
};

struct PoolSplit {
  std::vector<std::string> fisher_pool;
  std::vector<std::string> train_pool;
  std::vector<std::string> eval_pool;
  std::vector<std::string> ood_pool;

  std::string hash() const;
  std::string fisher_hash() const;
  nlohmann::json manifest() const;
};

/// Phrase and words used by the default vocabulary.
inline constexpr std::string_view kDefaultTargetPhrase = "a giant monster with sharp teeth";
inline constexpr std::string_view kDefaultStylePhrase = "anime style drawing with vivid colors";

/// Vocabulary covering both template sets, trigger tokens, and the default
/// target/style phrases. Id 0 is <unk>.
Vocab default_vocab();

/// `n` distinct templated prompts, deterministic in (seed, n, templates).
std::vector<std::string> gen_clean(std::uint64_t seed, std::size_t n, const TemplateSet& templates);

/// Throws std::invalid_argument("untriggerable prompt") when the family
/// cannot be applied.
std::string apply_trigger(std::string_view prompt, TriggerFamily family, const TriggerConfig& config = {});
bool is_triggerable(std::string_view prompt, TriggerFamily family, const TriggerConfig& config = {});

/// Shuffles `corpus` with `seed` and cuts it into fisher (exactly n_fisher),
/// eval (n_eval) and train (the rest). `ood` must not intersect the fisher pool.
PoolSplit split_pools(const std::vector<std::string>& corpus, std::size_t n_fisher, std::size_t n_eval,
                      std::uint64_t seed, std::vector<std::string> ood = {});

/// One prompt per line; blank lines dropped.
std::vector<std::string> ingest_ood(const std::filesystem::path& path);

/// Deterministic epoch-shuffled stream of poison triples over a train pool.
/// Prompts the family cannot trigger are excluded from the clean side.
class BatchStream {
 public:
  BatchStream(std::vector<std::string> train_pool, TriggerFamily family, std::size_t batch_size, std::uint64_t seed,
              TriggerConfig config = {});

  std::vector<PoisonTriple> next();
  std::size_t batches_per_epoch() const noexcept { return pool_.size() / batch_size_; }
  std::size_t pool_size() const noexcept { return pool_.size(); }

 private:
  void reshuffle();

  std::vector<std::string> pool_;
  std::vector<std::string> mismatch_pool_;
  std::vector<std::string> poisoned_;
  TriggerFamily family_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

std::string batch_hash(const std::vector<PoisonTriple>& batch);

}  // namespace aewc
