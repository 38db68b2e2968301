#pragma once

// Tiny transformer encoder, span-extraction head, language discriminator, and
// input packing.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xlqa/autodiff.hpp"

namespace xlqa::model {

using ad::Tensor;
using TokenId = std::uint32_t;

// Derives an independent stream seed (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Special token ids shared with the vocabulary.
inline constexpr TokenId kCls = 0;
inline constexpr TokenId kSep = 1;

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t hidden_dim = 64;
  std::size_t ff_dim = 256;
  std::size_t vocab_size = 2048;
  std::size_t max_seq_len = 64;
  std::size_t num_segments = 2;
  double dropout_rate = 0.1;
  std::uint64_t seed = 1;

  // Throws ConfigError on any violated invariant.
  void validate() const;

  // Scaled-down preset used by tests and the acceptance suite.
  static EncoderConfig desk();
  // Dimensions of the multilingual BERT-base encoder.
  static EncoderConfig reference();

  bool operator==(const EncoderConfig&) const = default;
};

struct PackingConfig {
  std::size_t max_seq_len = 64;
  std::size_t doc_stride = 16;
};

// Half-open [begin, end) position range in packed coordinates.
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool empty() const { return begin >= end; }
  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const Range&) const = default;
};

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // inclusive
  bool operator==(const Span&) const = default;
};

// [CLS] question [SEP] context-window [SEP]
struct PackedInput {
  std::vector<TokenId> tokens;
  std::vector<std::size_t> segments;
  std::vector<double> attention_mask;
  Range question;
  Range context;
  // Offset of the first windowed context token within the full context.
  std::size_t context_offset = 0;
  std::optional<Span> answer;  // packed coordinates

  std::size_t length() const { return tokens.size(); }
  // Packed position -> full-context index.
  std::size_t to_context(std::size_t position) const {
    return position - context.begin + context_offset;
  }
};

// Throws DataError when the question leaves no room for context.
std::vector<PackedInput> pack_input(std::span<const TokenId> question,
                                    std::span<const TokenId> context,
                                    std::optional<Span> answer,
                                    const PackingConfig& config);

// Packs two questions against one context so both share identical context
// windows; used for English/translation pairs.
std::vector<std::pair<PackedInput, PackedInput>> pack_pair(
    std::span<const TokenId> question_a, std::span<const TokenId> question_b,
    std::span<const TokenId> context, std::optional<Span> answer,
    const PackingConfig& config);

// Ordered, named parameter handles. Handles share storage with the owning
// module, so mutating through a ParamSet updates the module.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

class ParamSet {
 public:
  void add(std::string name, Tensor tensor);
  void append(const ParamSet& other);
  std::span<const NamedParam> items() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;
  void zero_grad() const;
  void set_requires_grad(bool flag) const;
  const Tensor* find(const std::string& name) const;

 private:
  std::vector<NamedParam> params_;
};

// Freezes a parameter set for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(const ParamSet& params);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  const ParamSet& params_;
};

struct EncoderLayer {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w_ff1, b_ff1, w_ff2, b_ff2;
};

struct Encoder {
  EncoderConfig config;
  Tensor token_embedding, position_embedding, segment_embedding;
  std::vector<EncoderLayer> layers;
  Tensor final_gain, final_bias;

  static Encoder init(const EncoderConfig& config, std::mt19937_64& rng);
  ParamSet params() const;
};

struct QAHead {
  Tensor w_begin;  // d x 1
  Tensor w_end;    // d x 1

  static QAHead init(std::size_t hidden_dim, std::mt19937_64& rng);
  ParamSet params() const;
};

// The QA model: encoder plus span head.
struct QAModel {
  Encoder encoder;
  QAHead head;

  static QAModel init(const EncoderConfig& config);
  ParamSet params() const;
};

struct Discriminator {
  Tensor w1, b1, w2, b2, w3, b3;

  static Discriminator init(std::size_t hidden_dim, std::size_t num_labels,
                            std::mt19937_64& rng);
  std::size_t num_labels() const { return b3.size(); }
  std::size_t input_dim() const { return w1.rows(); }
  ParamSet params() const;
};

struct SpanPrediction {
  Tensor alpha_begin;  // 1 x T
  Tensor alpha_end;    // 1 x T
};

// Dropout is active only when rng is non-null.
Tensor encode(const PackedInput& packed, const Encoder& encoder,
              std::mt19937_64* dropout_rng = nullptr);

SpanPrediction qa_forward(const Tensor& hidden, const QAHead& head);

enum class ReprMode { cls, avg };

ReprMode parse_repr_mode(const std::string& name);
std::string to_string(ReprMode mode);

// 1 x d representation of the question.
Tensor question_repr(const Tensor& hidden, const PackedInput& packed, ReprMode mode);

// Rows of repr are independent inputs; output rows are label distributions.
Tensor discriminate(const Tensor& repr, const Discriminator& disc);

struct ExtractedSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  double score = 0.0;
};

// Best (b, e) with b <= e inside `context` and e - b < max_answer_len,
// maximizing alpha_begin[b] * alpha_end[e].
ExtractedSpan extract_answer(std::span<const double> alpha_begin,
                             std::span<const double> alpha_end, Range context,
                             std::size_t max_answer_len);
ExtractedSpan extract_answer(const SpanPrediction& pred, const PackedInput& packed,
                             std::size_t max_answer_len);

}  // namespace xlqa::model
