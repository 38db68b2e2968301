#include "xlqa/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "xlqa/errors.hpp"

namespace xlqa::corpus {

namespace {

const std::array<std::string, 7> kWhWords = {"what", "who",  "when", "where",
                                             "why",  "how", "which"};
const std::array<std::string, 2> kLeadWords = {"name", "tell"};
const std::array<std::string, 4> kAuxWords = {"did", "was", "does", "is"};
const std::array<std::string, 5> kFillerWords = {"the", "of", "also", "then", "and"};

const std::vector<Relation>& base_relations() {
  static const std::vector<Relation> relations = {
      {"makes", QuestionType::what, "thing", "does"},
      {"wrote", QuestionType::what, "thing", "did"},
      {"founded", QuestionType::what, "thing", "did"},
      {"married", QuestionType::who, "person", "did"},
      {"hired", QuestionType::who, "person", "did"},
      {"met", QuestionType::who, "person", "did"},
      {"born", QuestionType::when, "year", "was"},
      {"opened", QuestionType::when, "year", "was"},
      {"died", QuestionType::when, "year", "did"},
      {"lives", QuestionType::where, "place", "does"},
      {"works", QuestionType::where, "place", "does"},
      {"visited", QuestionType::where, "place", "did"},
      {"left", QuestionType::why, "reason", "did"},
      {"sold", QuestionType::why, "reason", "did"},
      {"travels", QuestionType::how, "manner", "does"},
      {"pays", QuestionType::how, "manner", "does"},
      {"owns", QuestionType::which, "item", "does"},
      {"prefers", QuestionType::which, "item", "does"},
  };
  return relations;
}

const std::array<std::string, 7> kEntityClasses = {"person", "thing",  "year", "place",
                                                   "reason", "manner", "item"};

std::vector<std::string> english_words() {
  std::vector<std::string> words(kWhWords.begin(), kWhWords.end());
  words.insert(words.end(), kLeadWords.begin(), kLeadWords.end());
  words.insert(words.end(), kAuxWords.begin(), kAuxWords.end());
  for (const auto& r : base_relations()) words.push_back(r.word);
  words.insert(words.end(), kFillerWords.begin(), kFillerWords.end());
  return words;
}

// Reorder pattern cycled over the generated languages: position i gets
// kPatterns[i % 5].
struct LanguagePattern {
  Reorder reorder;
  bool expansion;
};
constexpr std::array<LanguagePattern, 5> kPatterns = {{
    {Reorder::identity, false},
    {Reorder::swap_pairs, false},
    {Reorder::identity, true},
    {Reorder::reverse, false},
    {Reorder::swap_pairs, true},
}};

constexpr double kExpansionShare = 0.35;

using Chunk = std::vector<TokenId>;

bool is_terminator(TokenId t) { return t == kPeriod || t == kQuestionMark; }

// Groups a sequence into reorderable units: a tagged region
// [ANS_OPEN .. ANS_CLOSE] is one unit, every other token is its own unit.
std::vector<Chunk> chunk(std::span<const TokenId> in) {
  std::vector<Chunk> chunks;
  for (std::size_t i = 0; i < in.size();) {
    if (in[i] == kAnsOpen) {
      const auto close = std::find(in.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                                   in.end(), kAnsClose);
      if (close != in.end()) {
        const auto j = static_cast<std::size_t>(close - in.begin());
        chunks.emplace_back(in.begin() + static_cast<std::ptrdiff_t>(i),
                            in.begin() + static_cast<std::ptrdiff_t>(j) + 1);
        i = j + 1;
        continue;
      }
    }
    chunks.push_back({in[i]});
    ++i;
  }
  return chunks;
}

void reorder_in_place(std::vector<Chunk>& body, Reorder r) {
  switch (r) {
    case Reorder::identity:
      break;
    case Reorder::reverse:
      std::reverse(body.begin(), body.end());
      break;
    case Reorder::swap_pairs:
      for (std::size_t i = 0; i + 1 < body.size(); i += 2) std::swap(body[i], body[i + 1]);
      break;
  }
}

// Applies `r` sentence by sentence; terminators stay at the end of their
// sentence. Both non-identity rules are involutions on the unit sequence.
std::vector<Chunk> reorder_sentences(std::vector<Chunk> chunks, Reorder r) {
  std::vector<Chunk> out;
  out.reserve(chunks.size());
  std::vector<Chunk> body;
  for (auto& c : chunks) {
    if (c.size() == 1 && is_terminator(c[0])) {
      reorder_in_place(body, r);
      for (auto& b : body) out.push_back(std::move(b));
      body.clear();
      out.push_back(std::move(c));
    } else {
      body.push_back(std::move(c));
    }
  }
  reorder_in_place(body, r);
  for (auto& b : body) out.push_back(std::move(b));
  return out;
}

using model::mix_seed;

template <typename T>
const T& pick(const std::vector<T>& pool, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
  return pool[dist(rng)];
}

}  // namespace

// ---- Vocabulary -----------------------------------------------------------

TokenId Vocabulary::add(const std::string& token, const std::string& lang, TokenId gloss) {
  if (index_.contains(token)) throw DataError("duplicate vocabulary token '" + token + "'");
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  langs_.push_back(lang);
  glosses_.push_back(gloss);
  index_.emplace(token, id);
  return id;
}

TokenId Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) throw DataError("unknown token '" + token + "'");
  return it->second;
}

std::optional<TokenId> Vocabulary::find(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw IndexError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(std::span<const TokenId> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(token(id));
  return out;
}

// ---- SyntheticLanguage ----------------------------------------------------

std::string to_string(Reorder r) {
  switch (r) {
    case Reorder::identity: return "identity";
    case Reorder::reverse: return "reverse";
    case Reorder::swap_pairs: return "swap_pairs";
  }
  return "identity";
}

Reorder parse_reorder(const std::string& name) {
  if (name == "identity") return Reorder::identity;
  if (name == "reverse") return Reorder::reverse;
  if (name == "swap_pairs") return Reorder::swap_pairs;
  throw ConfigError("unknown reorder rule '" + name + "'");
}

bool SyntheticLanguage::expands(TokenId english) const {
  return std::binary_search(expansion.begin(), expansion.end(), english);
}

std::vector<TokenId> SyntheticLanguage::translate_lexical(
    std::span<const TokenId> english) const {
  std::vector<TokenId> out;
  out.reserve(english.size() + english.size() / 2);
  for (auto t : english) {
    const auto it = bijection.find(t);
    if (it == bijection.end()) {
      out.push_back(t);
      continue;
    }
    out.push_back(it->second);
    if (expands(t)) out.push_back(particle);
  }
  return out;
}

std::vector<TokenId> SyntheticLanguage::translate(std::span<const TokenId> english) const {
  std::vector<TokenId> out;
  out.reserve(english.size() + english.size() / 2);
  for (const auto& c : reorder_sentences(chunk(english), reorder)) {
    const auto lex = translate_lexical(c);
    out.insert(out.end(), lex.begin(), lex.end());
  }
  return out;
}

std::vector<TokenId> SyntheticLanguage::invert(std::span<const TokenId> translated) const {
  std::map<TokenId, TokenId> inverse;
  for (const auto& [en, image] : bijection) inverse.emplace(image, en);
  std::vector<TokenId> lexical;
  lexical.reserve(translated.size());
  for (auto t : translated) {
    if (t == particle) continue;
    const auto it = inverse.find(t);
    lexical.push_back(it == inverse.end() ? t : it->second);
  }
  std::vector<TokenId> out;
  out.reserve(lexical.size());
  for (const auto& c : reorder_sentences(chunk(lexical), reorder)) {
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

// ---- question types -------------------------------------------------------

std::string to_string(QuestionType t) {
  static const std::array<std::string, kNumQuestionTypes> names = {
      "what", "who", "when", "where", "why", "how", "which", "other"};
  return names[static_cast<std::size_t>(t)];
}

const std::array<double, kNumQuestionTypes>& question_type_frequencies() {
  // SQuAD v1.1 counts (What, Who, When, Where, Why, How, Which, OTHER) over
  // 87,599 training questions.
  static const std::array<double, kNumQuestionTypes> freq = [] {
    constexpr std::array<double, kNumQuestionTypes> counts = {
        37506, 8366, 5414, 3261, 1194, 8082, 4146, 19630};
    std::array<double, kNumQuestionTypes> f{};
    for (std::size_t i = 0; i < counts.size(); ++i) f[i] = counts[i] / 87599.0;
    return f;
  }();
  return freq;
}

std::string gloss_of(const std::string& token) {
  const auto at = token.rfind('@');
  return at == std::string::npos ? token : token.substr(0, at);
}

QuestionType question_type(const Tokens& question) {
  if (question.empty()) return QuestionType::other;
  const auto first = gloss_of(question.front());
  for (std::size_t i = 0; i < kWhWords.size(); ++i) {
    if (first == kWhWords[i]) return static_cast<QuestionType>(i);
  }
  return QuestionType::other;
}

QuestionTypeHistogram question_type_stats(std::span<const RawExample> examples) {
  QuestionTypeHistogram h{};
  for (const auto& ex : examples) ++h[static_cast<std::size_t>(question_type(ex.question))];
  return h;
}

nlohmann::json histogram_to_json(const QuestionTypeHistogram& h) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < h.size(); ++i) j[to_string(static_cast<QuestionType>(i))] = h[i];
  return j;
}

// ---- World ----------------------------------------------------------------

const SyntheticLanguage& World::language(const std::string& lang_id) const {
  for (const auto& l : languages) {
    if (l.lang_id == lang_id) return l;
  }
  throw ConfigError("unknown language '" + lang_id + "'");
}

bool World::has_language(const std::string& lang_id) const {
  return std::any_of(languages.begin(), languages.end(),
                     [&](const SyntheticLanguage& l) { return l.lang_id == lang_id; });
}

std::vector<std::string> World::language_codes() const {
  std::vector<std::string> codes = {kEnglish};
  for (const auto& l : languages) codes.push_back(l.lang_id);
  return codes;
}

World generate_world(std::uint64_t seed, std::size_t num_languages, std::size_t vocab_size,
                     double tag_safety) {
  if (num_languages == 0) throw ConfigError("num_languages must be >= 1");
  if (vocab_size < 64 * (num_languages + 1)) {
    throw ConfigError("vocab_size " + std::to_string(vocab_size) + " too small for " +
                      std::to_string(num_languages) + " languages (need >= " +
                      std::to_string(64 * (num_languages + 1)) + ")");
  }
  if (!(tag_safety >= 0.0 && tag_safety <= 1.0)) {
    throw ConfigError("tag_safety must lie in [0, 1]");
  }
  std::mt19937_64 rng(mix_seed(seed, 0xC0FFEE));
  World w;
  w.seed = seed;
  w.vocab_size = vocab_size;
  auto& v = w.vocab;
  const std::array<std::string, kNumReserved> reserved = {
      "[CLS]", "[SEP]", "[PAD]", "[UNK]", "[ANS_OPEN]", "[ANS_CLOSE]", ".", "?"};
  for (TokenId i = 0; i < kNumReserved; ++i) v.add(reserved[i], kShared, i);

  const auto words = english_words();
  std::vector<TokenId> english_ids;
  for (const auto& word : words) {
    const auto id = static_cast<TokenId>(v.size());
    english_ids.push_back(v.add(word, kEnglish, id));
  }
  // Interrogatives and question leads never expand.
  const std::size_t first_expandable = kWhWords.size() + kLeadWords.size();

  for (std::size_t li = 0; li < num_languages; ++li) {
    SyntheticLanguage lang;
    lang.lang_id = "l" + std::to_string(li + 1);
    const auto pattern = kPatterns[li % kPatterns.size()];
    lang.reorder = pattern.reorder;
    lang.tag_safety = tag_safety;
    std::vector<std::size_t> order(words.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (auto wi : order) {
      const auto id = v.add(words[wi] + "@" + lang.lang_id, lang.lang_id, english_ids[wi]);
      lang.bijection.emplace(english_ids[wi], id);
    }
    lang.particle = v.add("~@" + lang.lang_id, lang.lang_id, kUnk);
    if (pattern.expansion) {
      std::bernoulli_distribution coin(kExpansionShare);
      for (std::size_t wi = first_expandable; wi < words.size(); ++wi) {
        if (coin(rng)) lang.expansion.push_back(english_ids[wi]);
      }
      std::sort(lang.expansion.begin(), lang.expansion.end());
    }
    w.languages.push_back(std::move(lang));
  }

  w.schema.relations = base_relations();
  std::size_t k = 0;
  while (v.size() < vocab_size) {
    const auto& cls = kEntityClasses[k % kEntityClasses.size()];
    const auto name = cls + "_" + std::to_string(k / kEntityClasses.size());
    v.add(name, kShared, static_cast<TokenId>(v.size()));
    w.schema.entities[cls].push_back(name);
    ++k;
  }
  return w;
}

nlohmann::json world_to_json(const World& world) {
  nlohmann::ordered_json j;
  j["seed"] = world.seed;
  j["vocab_size"] = world.vocab_size;
  j["num_languages"] = world.languages.size();
  j["tag_safety"] = world.languages.empty() ? 1.0 : world.languages.front().tag_safety;
  nlohmann::ordered_json langs = nlohmann::ordered_json::array();
  for (const auto& l : world.languages) {
    nlohmann::ordered_json lj;
    lj["lang_id"] = l.lang_id;
    lj["reorder"] = to_string(l.reorder);
    lj["particle"] = world.vocab.token(l.particle);
    std::vector<std::string> exp;
    for (auto t : l.expansion) exp.push_back(world.vocab.token(t));
    lj["expansion"] = exp;
    lj["tag_safety"] = l.tag_safety;
    langs.push_back(lj);
  }
  j["languages"] = langs;
  std::vector<std::string> tokens;
  for (TokenId i = 0; i < world.vocab.size(); ++i) tokens.push_back(world.vocab.token(i));
  j["vocabulary"] = tokens;
  return nlohmann::json::parse(j.dump());
}

World world_from_json(const nlohmann::json& j) {
  try {
    World w = generate_world(j.at("seed").get<std::uint64_t>(),
                             j.at("num_languages").get<std::size_t>(),
                             j.at("vocab_size").get<std::size_t>(),
                             j.at("tag_safety").get<double>());
    const auto tokens = j.at("vocabulary").get<std::vector<std::string>>();
    if (tokens.size() != w.vocab.size()) throw DataError("world vocabulary size mismatch");
    for (TokenId i = 0; i < tokens.size(); ++i) {
      if (tokens[i] != w.vocab.token(i)) {
        throw DataError("world vocabulary mismatch at id " + std::to_string(i));
      }
    }
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed world description: ") + e.what());
  }
}

// ---- examples -------------------------------------------------------------

void RawExample::validate() const {
  if (question.empty()) throw DataError("example " + id + ": empty question");
  if (context.empty()) throw DataError("example " + id + ": empty context");
  if (answer.text.empty() || answer.end < answer.begin) {
    throw DataError("example " + id + ": answer end precedes begin");
  }
  if (answer.end >= context.size()) {
    throw DataError("example " + id + ": answer span outside context");
  }
  if (answer.end - answer.begin + 1 != answer.text.size() ||
      !std::equal(answer.text.begin(), answer.text.end(),
                  context.begin() + static_cast<std::ptrdiff_t>(answer.begin))) {
    throw DataError("example " + id + ": answer text does not match context span");
  }
}

namespace {

struct Fact {
  Tokens subject;
  std::size_t relation;
  Tokens object;
  int form;
};

Tokens entity_phrase(const std::vector<std::string>& pool, std::size_t len,
                     std::mt19937_64& rng, const std::set<std::string>& avoid) {
  Tokens out;
  while (out.size() < len) {
    const auto& t = pick(pool, rng);
    if (avoid.contains(t) || std::find(out.begin(), out.end(), t) != out.end()) continue;
    out.push_back(t);
  }
  return out;
}

std::size_t sample_object_len(std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> dist({0.4, 0.3, 0.2, 0.1});
  return dist(rng) + 1;
}

// Appends the fact and returns the context index of its object.
std::size_t render_fact(const Fact& f, const Schema& schema, Tokens& out) {
  const auto& rel = schema.relations[f.relation].word;
  if (f.form == 2) out.push_back("then");
  out.insert(out.end(), f.subject.begin(), f.subject.end());
  if (f.form == 1) out.push_back("also");
  out.push_back(rel);
  if (f.form == 3) out.push_back("the");
  const auto at = out.size();
  out.insert(out.end(), f.object.begin(), f.object.end());
  out.push_back(".");
  return at;
}

RawExample generate_one(const World& world, std::uint64_t seed, const std::string& id) {
  std::mt19937_64 rng(seed);
  const auto& schema = world.schema;
  const auto& freq = question_type_frequencies();
  std::discrete_distribution<std::size_t> type_dist(freq.begin(), freq.end());
  const auto qtype = static_cast<QuestionType>(type_dist(rng));

  std::vector<std::size_t> candidates;
  for (std::size_t r = 0; r < schema.relations.size(); ++r) {
    if (qtype == QuestionType::other || schema.relations[r].type == qtype) {
      candidates.push_back(r);
    }
  }
  const auto target_rel = pick(candidates, rng);
  const auto& persons = schema.entities.at("person");
  std::uniform_int_distribution<std::size_t> subj_len(1, 2);
  std::uniform_int_distribution<int> form_dist(0, 3);

  Fact target;
  target.relation = target_rel;
  target.subject = entity_phrase(persons, subj_len(rng), rng, {});
  std::set<std::string> subject_tokens(target.subject.begin(), target.subject.end());
  target.object = entity_phrase(schema.entities.at(schema.relations[target_rel].object_class),
                                sample_object_len(rng), rng, subject_tokens);
  target.form = form_dist(rng);

  std::uniform_int_distribution<std::size_t> num_facts(4, 10);
  const auto total = num_facts(rng);
  std::vector<Fact> facts = {target};
  std::uniform_int_distribution<int> kind_dist(0, 1);
  std::uniform_int_distribution<std::size_t> rel_dist(0, schema.relations.size() - 1);
  while (facts.size() < total) {
    // Distractors never repeat the asked relation, so the relation word
    // alone locates the answer.
    Fact f;
    f.relation = rel_dist(rng);
    while (f.relation == target_rel) f.relation = rel_dist(rng);
    if (kind_dist(rng) == 0) {
      f.subject = target.subject;
    } else {
      f.subject = entity_phrase(persons, subj_len(rng), rng, subject_tokens);
    }
    std::set<std::string> avoid(f.subject.begin(), f.subject.end());
    avoid.insert(subject_tokens.begin(), subject_tokens.end());
    f.object = entity_phrase(schema.entities.at(schema.relations[f.relation].object_class),
                             sample_object_len(rng), rng, avoid);
    f.form = form_dist(rng);
    const bool clash = std::any_of(facts.begin(), facts.end(), [&](const Fact& g) {
      return g.subject == f.subject && g.relation == f.relation;
    });
    if (!clash) facts.push_back(std::move(f));
  }
  std::shuffle(facts.begin(), facts.end(), rng);

  RawExample ex;
  ex.id = id;
  for (const auto& f : facts) {
    const auto at = render_fact(f, schema, ex.context);
    if (f.subject == target.subject && f.relation == target_rel) {
      ex.answer = {at, at + f.object.size() - 1, f.object};
    }
  }
  const auto& rel = schema.relations[target_rel];
  if (qtype == QuestionType::other) {
    std::uniform_int_distribution<std::size_t> lead(0, kLeadWords.size() - 1);
    ex.question = {kLeadWords[lead(rng)], "the", rel.word, "of"};
    ex.question.insert(ex.question.end(), target.subject.begin(), target.subject.end());
  } else {
    ex.question = {to_string(qtype), rel.aux};
    ex.question.insert(ex.question.end(), target.subject.begin(), target.subject.end());
    ex.question.push_back(rel.word);
  }
  ex.question.push_back("?");
  return ex;
}

std::string format_id(const std::string& prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return prefix + "-" + digits;
}

}  // namespace

std::vector<RawExample> generate_examples(const World& world, std::size_t n,
                                          std::uint64_t seed, const std::string& id_prefix) {
  if (n == 0) throw ConfigError("generate_examples: n must be >= 1");
  std::vector<RawExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(generate_one(world, mix_seed(seed, i), format_id(id_prefix, i)));
  }
  return out;
}

// ---- JSONL ----------------------------------------------------------------

nlohmann::ordered_json example_to_json(const RawExample& ex) {
  // ordered_json keeps the documented field order on disk.
  nlohmann::ordered_json j;
  j["id"] = ex.id;
  j["q_lang"] = ex.q_lang;
  j["c_lang"] = ex.c_lang;
  j["question"] = ex.question;
  j["context"] = ex.context;
  nlohmann::ordered_json ans;
  ans["text"] = ex.answer.text;
  ans["answer_start"] = ex.answer.begin;
  j["answers"] = nlohmann::ordered_json::array({ans});
  return j;
}

RawExample example_from_json(const nlohmann::ordered_json& j) {
  RawExample ex;
  try {
    ex.id = j.at("id").get<std::string>();
    ex.q_lang = j.at("q_lang").get<std::string>();
    ex.c_lang = j.at("c_lang").get<std::string>();
    ex.question = j.at("question").get<Tokens>();
    ex.context = j.at("context").get<Tokens>();
    const auto& answers = j.at("answers");
    if (!answers.is_array() || answers.empty()) throw DataError("missing answers");
    const auto& a = answers.at(0);
    ex.answer.text = a.at("text").get<Tokens>();
    const auto start = a.at("answer_start").get<long long>();
    if (start < 0) throw DataError("negative answer_start");
    ex.answer.begin = static_cast<std::size_t>(start);
    if (ex.answer.text.empty()) {
      throw DataError("example " + ex.id + ": answer end precedes begin");
    }
    ex.answer.end = ex.answer.begin + ex.answer.text.size() - 1;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed example record: ") + e.what());
  }
  ex.validate();
  return ex;
}

void write_jsonl(std::span<const RawExample> examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& ex : examples) out << example_to_json(ex).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<RawExample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<RawExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(example_from_json(nlohmann::ordered_json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": parse error: " +
                      e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace xlqa::corpus
