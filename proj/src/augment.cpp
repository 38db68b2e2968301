#include "xlqa/augment.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <set>

#include "xlqa/errors.hpp"

namespace xlqa::augment {

namespace {

using corpus::kAnsClose;
using corpus::kAnsOpen;
using corpus::kEnglish;

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_tokens(std::span<const TokenId> tokens, std::uint64_t h) {
  for (auto t : tokens) {
    for (int b = 0; b < 4; ++b) {
      h ^= (t >> (8 * b)) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t example_seed(std::uint64_t seed, const std::string& id, const std::string& lang) {
  return fnv1a(lang, fnv1a(id, seed ^ 0x5bd1e995ULL));
}

void require_english_base(std::span<const RawExample> base) {
  for (const auto& ex : base) {
    if (ex.q_lang != kEnglish || ex.c_lang != kEnglish) {
      throw DataError("augmentation base must be English; example " + ex.id + " is (" +
                      ex.q_lang + ", " + ex.c_lang + ")");
    }
  }
}

std::vector<std::string> target_languages(const World& world, const Translator& translator,
                                          const AugmentOptions& options) {
  std::vector<std::string> langs = options.languages;
  if (langs.empty()) {
    for (const auto& l : world.languages) langs.push_back(l.lang_id);
  }
  for (const auto& l : langs) {
    if (l == kEnglish) throw ConfigError("cannot augment into the source language");
    if (!world.has_language(l) || !translator.supports(l)) {
      throw ConfigError("translator does not support language '" + l + "'");
    }
  }
  return langs;
}

std::string tag_of(Strategy s) {
  switch (s) {
    case Strategy::tq: return "q";
    case Strategy::tc: return "c";
    case Strategy::tqc: return "qc";
    case Strategy::tall: return "all";
  }
  return "?";
}

// Translates the context of `ex` into `lang` through tag alignment.
std::optional<RawExample> translate_context(const RawExample& ex, const World& world,
                                            const Translator& translator,
                                            const std::string& lang, std::uint64_t seed) {
  const auto ids = world.vocab.encode(ex.context);
  auto aligned = align_answer(ids, {ex.answer.begin, ex.answer.end}, translator, lang, seed);
  if (!aligned) return std::nullopt;
  RawExample out = ex;
  out.context = world.vocab.decode(aligned->context);
  out.answer.begin = aligned->span.begin;
  out.answer.end = aligned->span.end;
  out.answer.text.assign(out.context.begin() + static_cast<std::ptrdiff_t>(aligned->span.begin),
                         out.context.begin() + static_cast<std::ptrdiff_t>(aligned->span.end) + 1);
  out.c_lang = lang;
  return out;
}

corpus::Tokens translate_tokens(const corpus::Tokens& tokens, const World& world,
                                const Translator& translator, const std::string& lang,
                                std::uint64_t seed) {
  return world.vocab.decode(translator.translate(world.vocab.encode(tokens), lang, seed));
}

AugmentedDataset build_translated(std::span<const RawExample> base, const World& world,
                                  const Translator& translator, const AugmentOptions& options,
                                  Strategy strategy) {
  require_english_base(base);
  const auto langs = target_languages(world, translator, options);
  AugmentedDataset out;
  out.strategy = strategy;
  out.examples.assign(base.begin(), base.end());
  out.kept[kEnglish] = base.size();
  const bool question = strategy == Strategy::tq || strategy == Strategy::tqc;
  const bool context = strategy == Strategy::tc || strategy == Strategy::tqc;
  for (const auto& lang : langs) {
    std::size_t kept = 0, failed = 0;
    for (const auto& ex : base) {
      RawExample row = ex;
      if (context) {
        // Seeded by source id only, so T(C) and T(Q+C) keep the same rows.
        auto translated = translate_context(ex, world, translator, lang,
                                            example_seed(options.seed, ex.id, lang));
        if (!translated) {
          ++failed;
          continue;
        }
        row = std::move(*translated);
      }
      if (question) {
        row.question = translate_tokens(ex.question, world, translator, lang,
                                        example_seed(options.seed, ex.id, lang) ^ 0x51ULL);
        row.q_lang = lang;
      }
      row.id = translated_id(ex.id, strategy, lang);
      out.examples.push_back(std::move(row));
      ++kept;
    }
    out.kept[lang] = kept;
    out.failed[lang] = failed;
  }
  return out;
}

}  // namespace

// ---- translator -----------------------------------------------------------

SyntheticTranslator::SyntheticTranslator(const World& world) : world_(world) {}

SyntheticTranslator::SyntheticTranslator(const World& world, double tag_safety)
    : world_(world), tag_safety_override_(tag_safety) {}

bool SyntheticTranslator::supports(const std::string& lang) const {
  return world_.has_language(lang);
}

std::vector<TokenId> SyntheticTranslator::translate(std::span<const TokenId> tokens,
                                                    const std::string& lang,
                                                    std::uint64_t seed) const {
  const auto& language = world_.language(lang);
  auto out = language.translate(tokens);
  const double safety = tag_safety_override_.value_or(language.tag_safety);
  const bool tagged = std::find(tokens.begin(), tokens.end(), kAnsOpen) != tokens.end() ||
                      std::find(tokens.begin(), tokens.end(), kAnsClose) != tokens.end();
  if (!tagged || safety >= 1.0) return out;

  std::mt19937_64 rng(hash_tokens(tokens, fnv1a(lang, seed)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < safety) return out;
  const auto open = std::find(out.begin(), out.end(), kAnsOpen);
  const auto close = std::find(out.begin(), out.end(), kAnsClose);
  std::uniform_int_distribution<int> mode(0, 3);
  switch (mode(rng)) {
    case 0:
      if (open != out.end()) out.erase(open);
      break;
    case 1:
      if (close != out.end()) out.erase(close);
      break;
    case 2:
      if (open != out.end()) out.insert(open, kAnsOpen);
      break;
    default:
      if (open != out.end() && close != out.end()) std::iter_swap(open, close);
      break;
  }
  return out;
}

std::optional<AlignedContext> align_answer(std::span<const TokenId> context, model::Span span,
                                           const Translator& translator,
                                           const std::string& lang, std::uint64_t seed) {
  if (span.end < span.begin || span.end >= context.size()) {
    throw DataError("align_answer: span outside context");
  }
  std::vector<TokenId> tagged;
  tagged.reserve(context.size() + 2);
  tagged.insert(tagged.end(), context.begin(),
                context.begin() + static_cast<std::ptrdiff_t>(span.begin));
  tagged.push_back(kAnsOpen);
  tagged.insert(tagged.end(), context.begin() + static_cast<std::ptrdiff_t>(span.begin),
                context.begin() + static_cast<std::ptrdiff_t>(span.end) + 1);
  tagged.push_back(kAnsClose);
  tagged.insert(tagged.end(), context.begin() + static_cast<std::ptrdiff_t>(span.end) + 1,
                context.end());

  const auto translated = translator.translate(tagged, lang, seed);
  std::optional<std::size_t> open, close;
  for (std::size_t i = 0; i < translated.size(); ++i) {
    if (translated[i] == kAnsOpen) {
      if (open) return std::nullopt;
      open = i;
    } else if (translated[i] == kAnsClose) {
      if (close) return std::nullopt;
      close = i;
    }
  }
  if (!open || !close || *close <= *open + 1) return std::nullopt;

  AlignedContext out;
  out.context.reserve(translated.size() - 2);
  for (std::size_t i = 0; i < translated.size(); ++i) {
    if (i != *open && i != *close) out.context.push_back(translated[i]);
  }
  out.span = {*open, *close - 2};
  return out;
}

// ---- builders -------------------------------------------------------------

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::tq: return "TQ";
    case Strategy::tc: return "TC";
    case Strategy::tqc: return "TQC";
    case Strategy::tall: return "TALL";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  std::string upper;
  for (char c : name) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (upper == "TQ") return Strategy::tq;
  if (upper == "TC") return Strategy::tc;
  if (upper == "TQC") return Strategy::tqc;
  if (upper == "TALL") return Strategy::tall;
  throw ConfigError("unknown strategy '" + name + "' (expected TQ, TC, TQC or TALL)");
}

std::string translated_id(const std::string& source, Strategy s, const std::string& lang) {
  return source + "#" + tag_of(s) + ":" + lang;
}

std::string source_id(const std::string& id) {
  const auto hash = id.find('#');
  return hash == std::string::npos ? id : id.substr(0, hash);
}

AugmentedDataset build_translate_q(std::span<const RawExample> base, const World& world,
                                   const Translator& translator,
                                   const AugmentOptions& options) {
  return build_translated(base, world, translator, options, Strategy::tq);
}

AugmentedDataset build_translate_c(std::span<const RawExample> base, const World& world,
                                   const Translator& translator,
                                   const AugmentOptions& options) {
  return build_translated(base, world, translator, options, Strategy::tc);
}

AugmentedDataset build_translate_qc(std::span<const RawExample> base, const World& world,
                                    const Translator& translator,
                                    const AugmentOptions& options) {
  return build_translated(base, world, translator, options, Strategy::tqc);
}

AugmentedDataset build_translate_all(const AugmentedDataset& tq, const AugmentedDataset& tc,
                                     const AugmentedDataset& tqc) {
  auto originals = [](const AugmentedDataset& d) {
    std::vector<std::string> ids;
    for (const auto& ex : d.examples) {
      if (ex.q_lang == kEnglish && ex.c_lang == kEnglish) ids.push_back(ex.id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  const auto base_ids = originals(tq);
  if (originals(tc) != base_ids || originals(tqc) != base_ids) {
    throw DataError("build_translate_all: inputs were built from different bases");
  }
  AugmentedDataset out;
  out.strategy = Strategy::tall;
  std::set<std::string> seen;
  for (const auto* d : {&tq, &tc, &tqc}) {
    for (const auto& ex : d->examples) {
      if (seen.insert(ex.id).second) out.examples.push_back(ex);
    }
    for (const auto& [lang, n] : d->kept) {
      if (lang != kEnglish) out.kept[lang] += n;
    }
    for (const auto& [lang, n] : d->failed) out.failed[lang] += n;
  }
  out.kept[kEnglish] = base_ids.size();
  return out;
}

std::size_t translate_q_size(std::size_t base, std::size_t num_languages) {
  return base * (1 + num_languages);
}

std::size_t translate_all_size(std::size_t tq, std::size_t tc, std::size_t tqc,
                               std::size_t base) {
  return tq + tc + tqc - 2 * base;
}

CorpusStats corpus_stats(std::span<const RawExample> examples) {
  CorpusStats s;
  s.total_pairs = examples.size();
  s.question_types = corpus::question_type_stats(examples);
  if (examples.empty()) return s;
  double q = 0.0, a = 0.0;
  for (const auto& ex : examples) {
    q += static_cast<double>(ex.question.size());
    a += static_cast<double>(ex.answer.text.size());
  }
  s.avg_question_words = q / static_cast<double>(examples.size());
  s.avg_answer_words = a / static_cast<double>(examples.size());
  return s;
}

nlohmann::ordered_json stats_to_json(const AugmentedDataset& dataset) {
  const auto stats = corpus_stats(dataset.examples);
  nlohmann::ordered_json j;
  j["strategy"] = to_string(dataset.strategy);
  j["total"] = dataset.examples.size();
  j["kept"] = dataset.kept;
  j["failed"] = dataset.failed;
  nlohmann::ordered_json s;
  s["avg_question_words"] = stats.avg_question_words;
  s["avg_answer_words"] = stats.avg_answer_words;
  s["question_types"] = corpus::histogram_to_json(stats.question_types);
  s["total_pairs"] = stats.total_pairs;
  j["stats"] = s;
  return j;
}

EvalSet build_eval_set(std::span<const RawExample> base, const World& world,
                       const Translator& translator, std::span<const Cell> cells,
                       std::uint64_t seed) {
  require_english_base(base);
  EvalSet out;
  for (const auto& [q, c] : cells) {
    for (const auto& lang : {q, c}) {
      if (lang != kEnglish && (!world.has_language(lang) || !translator.supports(lang))) {
        throw ConfigError("eval cell uses unsupported language '" + lang + "'");
      }
    }
    const std::string key = q + "-" + c;
    std::size_t failed = 0;
    for (const auto& ex : base) {
      RawExample row = ex;
      if (c != kEnglish) {
        auto translated = translate_context(ex, world, translator, c,
                                            example_seed(seed, ex.id, c));
        if (!translated) {
          ++failed;
          continue;
        }
        row = std::move(*translated);
      }
      if (q != kEnglish) {
        row.question = translate_tokens(ex.question, world, translator, q,
                                        example_seed(seed, ex.id, q) ^ 0x51ULL);
        row.q_lang = q;
      }
      row.id = ex.id + "#" + key;
      out.examples.push_back(std::move(row));
    }
    out.failed[key] = failed;
  }
  return out;
}

}  // namespace xlqa::augment
