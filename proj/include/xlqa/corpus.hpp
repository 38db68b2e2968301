#pragma once

// The synthetic multilingual world: a shared vocabulary, deterministic
// pseudo-languages, SQuAD-like English examples, and JSONL serialization.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "xlqa/model.hpp"

namespace xlqa::corpus {

using model::TokenId;
using Tokens = std::vector<std::string>;

inline constexpr TokenId kCls = 0;
inline constexpr TokenId kSep = 1;
inline constexpr TokenId kPad = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kAnsOpen = 4;
inline constexpr TokenId kAnsClose = 5;
inline constexpr TokenId kPeriod = 6;
inline constexpr TokenId kQuestionMark = 7;
inline constexpr TokenId kNumReserved = 8;

inline const std::string kEnglish = "en";
// Language tag of tokens shared by every language (specials, punctuation,
// entity names).
inline const std::string kShared = "*";

class Vocabulary {
 public:
  TokenId add(const std::string& token, const std::string& lang, TokenId gloss);
  // Throws DataError for unknown tokens.
  TokenId id(const std::string& token) const;
  std::optional<TokenId> find(const std::string& token) const;
  const std::string& token(TokenId id) const;
  const std::string& lang(TokenId id) const { return langs_.at(id); }
  // English token this one translates (itself for English and shared tokens).
  TokenId gloss(TokenId id) const { return glosses_.at(id); }
  std::size_t size() const { return tokens_.size(); }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  Tokens decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_ &&
      langs_ == other.langs_ && glosses_ == other.glosses_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> langs_;
  std::vector<TokenId> glosses_;
  std::unordered_map<std::string, TokenId> index_;
};

enum class Reorder { identity, reverse, swap_pairs };

std::string to_string(Reorder r);
Reorder parse_reorder(const std::string& name);

struct SyntheticLanguage {
  std::string lang_id;
  // English content word -> image token in this language's block.
  std::map<TokenId, TokenId> bijection;
  Reorder reorder = Reorder::identity;
  // English words rendered as (image, particle).
  std::vector<TokenId> expansion;
  TokenId particle = kUnk;
  double tag_safety = 1.0;

  bool expands(TokenId english) const;
  // Deterministic lexical + reorder translation of English token ids; tag
  // tokens travel with the region they enclose.
  std::vector<TokenId> translate(std::span<const TokenId> english) const;
  // Token-by-token rendering in original order (used for answer text).
  std::vector<TokenId> translate_lexical(std::span<const TokenId> english) const;
  // Inverse of translate when the language has no expansion tokens; particles
  // are dropped otherwise.
  std::vector<TokenId> invert(std::span<const TokenId> translated) const;

  bool operator==(const SyntheticLanguage&) const = default;
};

enum class QuestionType { what, who, when, where, why, how, which, other };

inline constexpr std::size_t kNumQuestionTypes = 8;
std::string to_string(QuestionType t);
// Share of each type in the SQuAD v1.1 training set, by first question word.
const std::array<double, kNumQuestionTypes>& question_type_frequencies();

struct Relation {
  std::string word;
  QuestionType type;
  std::string object_class;
  std::string aux;
};

struct Schema {
  std::vector<Relation> relations;
  // Entity class -> pool of entity token strings.
  std::map<std::string, std::vector<std::string>> entities;
};

struct World {
  std::uint64_t seed = 0;
  std::size_t vocab_size = 0;
  Vocabulary vocab;
  std::vector<SyntheticLanguage> languages;  // excludes English
  Schema schema;

  const SyntheticLanguage& language(const std::string& lang_id) const;
  bool has_language(const std::string& lang_id) const;
  // "en" followed by every synthetic language code.
  std::vector<std::string> language_codes() const;
};

// Throws ConfigError when num_languages == 0 or the vocabulary is too small.
World generate_world(std::uint64_t seed, std::size_t num_languages, std::size_t vocab_size,
                     double tag_safety = 1.0);

nlohmann::json world_to_json(const World& world);
// Regenerates from the recorded parameters and checks the vocabulary matches.
World world_from_json(const nlohmann::json& j);

struct Answer {
  std::size_t begin = 0;
  std::size_t end = 0;  // inclusive
  Tokens text;
  bool operator==(const Answer&) const = default;
};

struct RawExample {
  std::string id;
  Tokens question;
  Tokens context;
  Answer answer;
  std::string q_lang = kEnglish;
  std::string c_lang = kEnglish;

  // Throws DataError when the answer is not the context span it claims.
  void validate() const;
  bool operator==(const RawExample&) const = default;
};

std::vector<RawExample> generate_examples(const World& world, std::size_t n,
                                          std::uint64_t seed,
                                          const std::string& id_prefix = "ex");

nlohmann::ordered_json example_to_json(const RawExample& ex);
// Throws DataError on schema violations.
RawExample example_from_json(const nlohmann::ordered_json& j);

void write_jsonl(std::span<const RawExample> examples, const std::filesystem::path& path);
std::vector<RawExample> read_jsonl(const std::filesystem::path& path);

using QuestionTypeHistogram = std::array<std::size_t, kNumQuestionTypes>;

// Classifies by the (English gloss of the) first question token.
QuestionType question_type(const Tokens& question);
QuestionTypeHistogram question_type_stats(std::span<const RawExample> examples);
nlohmann::json histogram_to_json(const QuestionTypeHistogram& h);

// Strips a "@lang" suffix: "wrote@l2" -> "wrote".
std::string gloss_of(const std::string& token);

}  // namespace xlqa::corpus
