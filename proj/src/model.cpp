#include "xlqa/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xlqa/errors.hpp"

namespace xlqa::model {

namespace {

constexpr double kInitStd = 0.02;

Tensor normal_param(ad::Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  std::vector<double> values(ad::num_elements(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(values));
}

Tensor const_param(ad::Shape shape, double value) {
  return Tensor::parameter(shape, std::vector<double>(ad::num_elements(shape), value));
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ad::add_row(ad::matmul(x, w), b);
}

struct Window {
  std::size_t start;
  std::size_t length;
};

std::vector<Window> context_windows(std::size_t context_len, std::size_t max_ctx,
                                    std::size_t stride) {
  std::vector<Window> windows;
  std::size_t start = 0;
  while (true) {
    const std::size_t len = std::min(max_ctx, context_len - start);
    windows.push_back({start, len});
    if (start + len >= context_len) break;
    start += std::min(len, stride);
  }
  return windows;
}

PackedInput pack_window(std::span<const TokenId> question,
                        std::span<const TokenId> context, std::optional<Span> answer,
                        Window window) {
  PackedInput p;
  const std::size_t total = question.size() + window.length + 3;
  p.tokens.reserve(total);
  p.tokens.push_back(kCls);
  p.tokens.insert(p.tokens.end(), question.begin(), question.end());
  p.tokens.push_back(kSep);
  const std::size_t ctx_begin = p.tokens.size();
  p.tokens.insert(p.tokens.end(), context.begin() + static_cast<std::ptrdiff_t>(window.start),
                  context.begin() + static_cast<std::ptrdiff_t>(window.start + window.length));
  p.tokens.push_back(kSep);
  p.segments.assign(p.tokens.size(), 1);
  std::fill_n(p.segments.begin(), ctx_begin, 0);
  p.attention_mask.assign(p.tokens.size(), 1.0);
  p.question = {1, 1 + question.size()};
  p.context = {ctx_begin, ctx_begin + window.length};
  p.context_offset = window.start;
  if (answer && answer->begin >= window.start &&
      answer->end < window.start + window.length) {
    p.answer = Span{ctx_begin + answer->begin - window.start,
                    ctx_begin + answer->end - window.start};
  }
  return p;
}

void check_packable(std::span<const TokenId> question, std::span<const TokenId> context,
                    std::optional<Span> answer, const PackingConfig& config) {
  if (question.empty()) throw DataError("pack_input: empty question");
  if (context.empty()) throw DataError("pack_input: empty context");
  if (config.max_seq_len < 4 || question.size() + 3 >= config.max_seq_len) {
    throw DataError("pack_input: unpackable example, question of " +
                    std::to_string(question.size()) + " tokens leaves no room under " +
                    "max_seq_len " + std::to_string(config.max_seq_len));
  }
  if (config.doc_stride == 0) throw ConfigError("pack_input: doc_stride must be >= 1");
  if (answer && (answer->end < answer->begin || answer->end >= context.size())) {
    throw DataError("pack_input: answer span outside context");
  }
}

}  // namespace

// ---- configuration --------------------------------------------------------

void EncoderConfig::validate() const {
  if (num_layers == 0) throw ConfigError("num_layers must be >= 1");
  if (num_heads == 0 || hidden_dim % num_heads != 0) {
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (max_seq_len < 8) throw ConfigError("max_seq_len must be >= 8");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0, 1)");
  }
  if (vocab_size == 0 || ff_dim == 0) throw ConfigError("vocab_size and ff_dim must be > 0");
  if (num_segments != 2) throw ConfigError("num_segments must be 2");
}

EncoderConfig EncoderConfig::desk() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::reference() {
  EncoderConfig c;
  c.num_layers = 12;
  c.num_heads = 12;
  c.hidden_dim = 768;
  c.ff_dim = 3072;
  c.vocab_size = 120000;
  c.max_seq_len = 384;
  return c;
}

// ---- packing --------------------------------------------------------------

std::vector<PackedInput> pack_input(std::span<const TokenId> question,
                                    std::span<const TokenId> context,
                                    std::optional<Span> answer,
                                    const PackingConfig& config) {
  check_packable(question, context, answer, config);
  const std::size_t max_ctx = config.max_seq_len - 3 - question.size();
  std::vector<PackedInput> out;
  for (const auto& w : context_windows(context.size(), max_ctx, config.doc_stride)) {
    out.push_back(pack_window(question, context, answer, w));
  }
  return out;
}

std::vector<std::pair<PackedInput, PackedInput>> pack_pair(
    std::span<const TokenId> question_a, std::span<const TokenId> question_b,
    std::span<const TokenId> context, std::optional<Span> answer,
    const PackingConfig& config) {
  const auto& longer = question_a.size() >= question_b.size() ? question_a : question_b;
  check_packable(longer, context, answer, config);
  check_packable(question_a, context, answer, config);
  const std::size_t max_ctx = config.max_seq_len - 3 - longer.size();
  std::vector<std::pair<PackedInput, PackedInput>> out;
  for (const auto& w : context_windows(context.size(), max_ctx, config.doc_stride)) {
    out.emplace_back(pack_window(question_a, context, answer, w),
                     pack_window(question_b, context, answer, w));
  }
  return out;
}

// ---- parameters -----------------------------------------------------------

void ParamSet::add(std::string name, Tensor tensor) {
  params_.push_back({std::move(name), std::move(tensor)});
}

void ParamSet::append(const ParamSet& other) {
  params_.insert(params_.end(), other.params_.begin(), other.params_.end());
}

std::size_t ParamSet::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParamSet::zero_grad() const {
  for (const auto& p : params_) {
    auto t = p.tensor;
    t.zero_grad();
  }
}

void ParamSet::set_requires_grad(bool flag) const {
  for (const auto& p : params_) {
    auto t = p.tensor;
    t.set_requires_grad(flag);
  }
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p.tensor;
  }
  return nullptr;
}

FreezeGuard::FreezeGuard(const ParamSet& params) : params_(params) {
  params_.set_requires_grad(false);
}

FreezeGuard::~FreezeGuard() { params_.set_requires_grad(true); }

Encoder Encoder::init(const EncoderConfig& config, std::mt19937_64& rng) {
  config.validate();
  const auto d = config.hidden_dim;
  Encoder e;
  e.config = config;
  e.token_embedding = normal_param({config.vocab_size, d}, rng);
  e.position_embedding = normal_param({config.max_seq_len, d}, rng);
  e.segment_embedding = normal_param({config.num_segments, d}, rng);
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    EncoderLayer l;
    l.ln1_gain = const_param({1, d}, 1.0);
    l.ln1_bias = const_param({1, d}, 0.0);
    l.wq = normal_param({d, d}, rng);
    l.bq = const_param({1, d}, 0.0);
    l.wk = normal_param({d, d}, rng);
    l.bk = const_param({1, d}, 0.0);
    l.wv = normal_param({d, d}, rng);
    l.bv = const_param({1, d}, 0.0);
    l.wo = normal_param({d, d}, rng);
    l.bo = const_param({1, d}, 0.0);
    l.ln2_gain = const_param({1, d}, 1.0);
    l.ln2_bias = const_param({1, d}, 0.0);
    l.w_ff1 = normal_param({d, config.ff_dim}, rng);
    l.b_ff1 = const_param({1, config.ff_dim}, 0.0);
    l.w_ff2 = normal_param({config.ff_dim, d}, rng);
    l.b_ff2 = const_param({1, d}, 0.0);
    e.layers.push_back(std::move(l));
  }
  e.final_gain = const_param({1, d}, 1.0);
  e.final_bias = const_param({1, d}, 0.0);
  return e;
}

ParamSet Encoder::params() const {
  ParamSet ps;
  ps.add("encoder.token_embedding", token_embedding);
  ps.add("encoder.position_embedding", position_embedding);
  ps.add("encoder.segment_embedding", segment_embedding);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string p = "encoder.layer" + std::to_string(i) + ".";
    ps.add(p + "ln1.gain", l.ln1_gain);
    ps.add(p + "ln1.bias", l.ln1_bias);
    ps.add(p + "attn.wq", l.wq);
    ps.add(p + "attn.bq", l.bq);
    ps.add(p + "attn.wk", l.wk);
    ps.add(p + "attn.bk", l.bk);
    ps.add(p + "attn.wv", l.wv);
    ps.add(p + "attn.bv", l.bv);
    ps.add(p + "attn.wo", l.wo);
    ps.add(p + "attn.bo", l.bo);
    ps.add(p + "ln2.gain", l.ln2_gain);
    ps.add(p + "ln2.bias", l.ln2_bias);
    ps.add(p + "ff.w1", l.w_ff1);
    ps.add(p + "ff.b1", l.b_ff1);
    ps.add(p + "ff.w2", l.w_ff2);
    ps.add(p + "ff.b2", l.b_ff2);
  }
  ps.add("encoder.final.gain", final_gain);
  ps.add("encoder.final.bias", final_bias);
  return ps;
}

QAHead QAHead::init(std::size_t hidden_dim, std::mt19937_64& rng) {
  return {normal_param({hidden_dim, 1}, rng), normal_param({hidden_dim, 1}, rng)};
}

ParamSet QAHead::params() const {
  ParamSet ps;
  ps.add("qa.w_begin", w_begin);
  ps.add("qa.w_end", w_end);
  return ps;
}

QAModel QAModel::init(const EncoderConfig& config) {
  std::mt19937_64 rng(config.seed);
  QAModel m;
  m.encoder = Encoder::init(config, rng);
  m.head = QAHead::init(config.hidden_dim, rng);
  return m;
}

ParamSet QAModel::params() const {
  ParamSet ps = encoder.params();
  ps.append(head.params());
  return ps;
}

Discriminator Discriminator::init(std::size_t hidden_dim, std::size_t num_labels,
                                  std::mt19937_64& rng) {
  if (num_labels < 2) throw ConfigError("discriminator needs at least 2 labels");
  const auto width = 4 * hidden_dim;
  Discriminator d;
  d.w1 = normal_param({hidden_dim, width}, rng);
  d.b1 = const_param({1, width}, 0.0);
  d.w2 = normal_param({width, width}, rng);
  d.b2 = const_param({1, width}, 0.0);
  d.w3 = normal_param({width, num_labels}, rng);
  d.b3 = const_param({1, num_labels}, 0.0);
  return d;
}

ParamSet Discriminator::params() const {
  ParamSet ps;
  ps.add("disc.w1", w1);
  ps.add("disc.b1", b1);
  ps.add("disc.w2", w2);
  ps.add("disc.b2", b2);
  ps.add("disc.w3", w3);
  ps.add("disc.b3", b3);
  return ps;
}

// ---- forward passes -------------------------------------------------------

Tensor encode(const PackedInput& packed, const Encoder& encoder,
              std::mt19937_64* dropout_rng) {
  const auto& cfg = encoder.config;
  const std::size_t seq = packed.length();
  if (seq == 0 || seq > cfg.max_seq_len) {
    throw ShapeError("encode: sequence length " + std::to_string(seq) +
                     " outside [1, " + std::to_string(cfg.max_seq_len) + "]");
  }
  std::vector<std::size_t> ids(packed.tokens.begin(), packed.tokens.end());
  std::vector<std::size_t> positions(seq);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  Tensor x = ad::add(ad::gather_rows(encoder.token_embedding, ids),
                     ad::gather_rows(encoder.position_embedding, positions));
  x = ad::add(x, ad::gather_rows(encoder.segment_embedding, packed.segments));

  const bool masked = std::any_of(packed.attention_mask.begin(), packed.attention_mask.end(),
                                  [](double m) { return m == 0.0; });
  Tensor mask_bias;
  if (masked) {
    std::vector<double> bias(seq * seq, 0.0);
    for (std::size_t r = 0; r < seq; ++r) {
      for (std::size_t c = 0; c < seq; ++c) {
        if (packed.attention_mask[c] == 0.0) bias[r * seq + c] = -1e9;
      }
    }
    mask_bias = Tensor::from({seq, seq}, std::move(bias));
  }

  const std::size_t heads = cfg.num_heads;
  const std::size_t dh = cfg.hidden_dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const double p = dropout_rng ? cfg.dropout_rate : 0.0;

  for (const auto& layer : encoder.layers) {
    Tensor h = ad::layer_norm(x, layer.ln1_gain, layer.ln1_bias);
    Tensor q = affine(h, layer.wq, layer.bq);
    Tensor k = affine(h, layer.wk, layer.bk);
    Tensor v = affine(h, layer.wv, layer.bv);
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
      Tensor qh = heads == 1 ? q : ad::slice_cols(q, i * dh, (i + 1) * dh);
      Tensor kh = heads == 1 ? k : ad::slice_cols(k, i * dh, (i + 1) * dh);
      Tensor vh = heads == 1 ? v : ad::slice_cols(v, i * dh, (i + 1) * dh);
      Tensor scores = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt);
      if (masked) scores = ad::add(scores, mask_bias);
      outs.push_back(ad::matmul(ad::softmax_rows(scores), vh));
    }
    Tensor attn = heads == 1 ? outs[0] : ad::concat_cols(outs);
    attn = ad::dropout(affine(attn, layer.wo, layer.bo), p, dropout_rng);
    x = ad::add(x, attn);

    Tensor h2 = ad::layer_norm(x, layer.ln2_gain, layer.ln2_bias);
    Tensor ff = ad::gelu(affine(h2, layer.w_ff1, layer.b_ff1));
    ff = ad::dropout(affine(ff, layer.w_ff2, layer.b_ff2), p, dropout_rng);
    x = ad::add(x, ff);
  }
  return ad::layer_norm(x, encoder.final_gain, encoder.final_bias);
}

SpanPrediction qa_forward(const Tensor& hidden, const QAHead& head) {
  if (!hidden.defined() || hidden.size() == 0) throw ShapeError("qa_forward: empty H");
  return {ad::softmax_rows(ad::transpose(ad::matmul(hidden, head.w_begin))),
          ad::softmax_rows(ad::transpose(ad::matmul(hidden, head.w_end)))};
}

ReprMode parse_repr_mode(const std::string& name) {
  if (name == "cls") return ReprMode::cls;
  if (name == "avg") return ReprMode::avg;
  throw ConfigError("unknown representation mode '" + name + "' (expected cls|avg)");
}

std::string to_string(ReprMode mode) { return mode == ReprMode::cls ? "cls" : "avg"; }

Tensor question_repr(const Tensor& hidden, const PackedInput& packed, ReprMode mode) {
  if (mode == ReprMode::cls) return ad::slice_rows(hidden, 0, 1);
  if (packed.question.empty()) throw DataError("question_repr: empty question range");
  std::vector<double> mask(hidden.rows(), 0.0);
  for (std::size_t i = packed.question.begin; i < packed.question.end; ++i) mask[i] = 1.0;
  return ad::masked_mean_rows(hidden, mask);
}

Tensor discriminate(const Tensor& repr, const Discriminator& disc) {
  if (repr.cols() != disc.input_dim()) {
    throw ShapeError("discriminate: representation " + ad::shape_str(repr.shape()) +
                     " does not match input dim " + std::to_string(disc.input_dim()));
  }
  Tensor h = ad::gelu(affine(repr, disc.w1, disc.b1));
  h = ad::gelu(affine(h, disc.w2, disc.b2));
  return ad::softmax_rows(affine(h, disc.w3, disc.b3));
}

ExtractedSpan extract_answer(std::span<const double> alpha_begin,
                             std::span<const double> alpha_end, Range context,
                             std::size_t max_answer_len) {
  const std::size_t limit = std::min({context.end, alpha_begin.size(), alpha_end.size()});
  ExtractedSpan best;
  bool found = false;
  for (std::size_t b = context.begin; b < limit; ++b) {
    const std::size_t last = std::min(limit, b + max_answer_len);
    for (std::size_t e = b; e < last; ++e) {
      const double score = alpha_begin[b] * alpha_end[e];
      if (!found || score > best.score) {
        best = {b, e, score};
        found = true;
      }
    }
  }
  if (found) return best;
  // No legal pair: fall back to the most probable single context token.
  for (std::size_t t = context.begin; t < limit; ++t) {
    const double score = alpha_begin[t] * alpha_end[t];
    if (!found || score > best.score) {
      best = {t, t, score};
      found = true;
    }
  }
  return best;
}

ExtractedSpan extract_answer(const SpanPrediction& pred, const PackedInput& packed,
                             std::size_t max_answer_len) {
  return extract_answer(pred.alpha_begin.values(), pred.alpha_end.values(), packed.context,
                        max_answer_len);
}

}  // namespace xlqa::model
