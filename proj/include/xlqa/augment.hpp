#pragma once

// Translation-based data augmentation: the translator contract, pseudo-tag
// answer alignment, the four dataset builders and corpus statistics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "xlqa/corpus.hpp"

namespace xlqa::augment {

using corpus::RawExample;
using corpus::TokenId;
using corpus::World;

class Translator {
 public:
  virtual ~Translator() = default;
  virtual bool supports(const std::string& lang) const = 0;
  // Must be deterministic for fixed (tokens, lang, seed).
  virtual std::vector<TokenId> translate(std::span<const TokenId> tokens,
                                         const std::string& lang,
                                         std::uint64_t seed) const = 0;
};

// Renders text in a world's synthetic languages. With probability
// 1 - tag_safety a call that carries answer tags corrupts them (one tag
// dropped, duplicated, or the pair swapped).
class SyntheticTranslator : public Translator {
 public:
  explicit SyntheticTranslator(const World& world);
  SyntheticTranslator(const World& world, double tag_safety);

  bool supports(const std::string& lang) const override;
  std::vector<TokenId> translate(std::span<const TokenId> tokens, const std::string& lang,
                                 std::uint64_t seed) const override;

 private:
  const World& world_;
  std::optional<double> tag_safety_override_;
};

struct AlignedContext {
  std::vector<TokenId> context;
  model::Span span;  // inclusive, in the tag-stripped translated context
};

// Wraps the span in [ANS_OPEN]/[ANS_CLOSE], translates, and recovers the span
// from the tags. Empty when the tags do not come back as exactly one ordered
// pair around a nonempty region.
std::optional<AlignedContext> align_answer(std::span<const TokenId> context, model::Span span,
                                           const Translator& translator,
                                           const std::string& lang, std::uint64_t seed);

enum class Strategy { tq, tc, tqc, tall };

std::string to_string(Strategy s);
// Accepts TQ/TC/TQC/TALL (case-insensitive); ConfigError otherwise.
Strategy parse_strategy(const std::string& name);

struct AugmentedDataset {
  Strategy strategy = Strategy::tq;
  std::vector<RawExample> examples;
  std::map<std::string, std::size_t> kept;
  std::map<std::string, std::size_t> failed;
};

struct CorpusStats {
  double avg_question_words = 0.0;
  double avg_answer_words = 0.0;
  corpus::QuestionTypeHistogram question_types{};
  std::size_t total_pairs = 0;
};

struct AugmentOptions {
  std::uint64_t seed = 0;
  // Languages to translate into; empty means every language of the world.
  std::vector<std::string> languages;
};

AugmentedDataset build_translate_q(std::span<const RawExample> base, const World& world,
                                   const Translator& translator,
                                   const AugmentOptions& options = {});
AugmentedDataset build_translate_c(std::span<const RawExample> base, const World& world,
                                   const Translator& translator,
                                   const AugmentOptions& options = {});
AugmentedDataset build_translate_qc(std::span<const RawExample> base, const World& world,
                                    const Translator& translator,
                                    const AugmentOptions& options = {});
// English originals are kept once (deduplicated by id).
AugmentedDataset build_translate_all(const AugmentedDataset& tq, const AugmentedDataset& tc,
                                     const AugmentedDataset& tqc);

// Count identities satisfied by the builders.
std::size_t translate_q_size(std::size_t base, std::size_t num_languages);
std::size_t translate_all_size(std::size_t tq, std::size_t tc, std::size_t tqc,
                               std::size_t base);

CorpusStats corpus_stats(std::span<const RawExample> examples);
nlohmann::ordered_json stats_to_json(const AugmentedDataset& dataset);

// Example id helpers: "<source>#<tag>:<lang>" for translated rows.
std::string translated_id(const std::string& source_id, Strategy s, const std::string& lang);
// Source id of a translated row (the id itself for originals).
std::string source_id(const std::string& id);

// Eval-set construction: one cell per (question language, context language).
using Cell = std::pair<std::string, std::string>;

struct EvalSet {
  std::vector<RawExample> examples;
  std::map<std::string, std::size_t> failed;  // keyed "q-c"
};

EvalSet build_eval_set(std::span<const RawExample> base, const World& world,
                       const Translator& translator, std::span<const Cell> cells,
                       std::uint64_t seed);

}  // namespace xlqa::augment
