#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "support/gradcheck.hpp"
#include "xlqa/errors.hpp"
#include "xlqa/model.hpp"
#include "xlqa/objectives.hpp"
#include "xlqa/trainer.hpp"

using namespace xlqa;
using ad::Tensor;
using model::PackedInput;
using model::TokenId;

namespace {

model::EncoderConfig tiny_config(std::uint64_t seed = 1) {
  model::EncoderConfig c;
  c.num_layers = 2;
  c.num_heads = 2;
  c.hidden_dim = 8;
  c.ff_dim = 16;
  c.vocab_size = 24;
  c.max_seq_len = 16;
  c.dropout_rate = 0.0;
  c.seed = seed;
  return c;
}

PackedInput packed_example() {
  const std::vector<TokenId> q{9, 10, 11};
  const std::vector<TokenId> c{12, 13, 14, 15, 16, 17};
  return model::pack_input(q, c, model::Span{2, 3}, {16, 4}).front();
}

Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor::from({rows, cols}, std::move(v));
}

}  // namespace

TEST_CASE("pack_input layout") {
  const std::vector<TokenId> q{20, 21};
  const std::vector<TokenId> c{30, 31, 32};
  const auto windows = model::pack_input(q, c, model::Span{1, 2}, {64, 16});
  REQUIRE(windows.size() == 1);
  const auto& w = windows[0];
  CHECK(w.tokens == std::vector<TokenId>{model::kCls, 20, 21, model::kSep, 30, 31, 32, model::kSep});
  CHECK(w.segments == std::vector<std::size_t>{0, 0, 0, 0, 1, 1, 1, 1});
  REQUIRE(w.answer.has_value());
  CHECK(*w.answer == model::Span{5, 6});
  CHECK(w.question == model::Range{1, 3});
  CHECK(w.context == model::Range{4, 7});
}

TEST_CASE("pack_input sliding windows") {
  const std::vector<TokenId> q{20};
  const std::vector<TokenId> c{30, 31, 32, 33, 34, 35};
  const auto windows = model::pack_input(q, c, model::Span{4, 4}, {8, 2});
  REQUIRE(windows.size() == 2);
  CHECK(windows[0].context_offset == 0);
  CHECK(windows[0].context.size() == 4);
  CHECK(windows[1].context_offset == 2);
  CHECK(windows[1].context.size() == 4);
  CHECK_FALSE(windows[0].answer.has_value());
  REQUIRE(windows[1].answer.has_value());
  CHECK(windows[1].to_context(windows[1].answer->begin) == 4);

  const auto none = model::pack_input(q, c, std::nullopt, {8, 2});
  for (const auto& w : none) CHECK_FALSE(w.answer.has_value());
  CHECK_THROWS_AS(model::pack_input({}, c, std::nullopt, {8, 2}), DataError);
  CHECK_THROWS_AS(model::pack_input(q, {}, std::nullopt, {8, 2}), DataError);
}

TEST_CASE("pack_input windows cover the context in order") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<std::size_t> qlen(1, 6), clen(1, 60);
    std::vector<TokenId> q(qlen(rng), 9), c(clen(rng), 10);
    std::uniform_int_distribution<std::size_t> pos(0, c.size() - 1);
    std::size_t b = pos(rng), e = pos(rng);
    if (b > e) std::swap(b, e);
    const auto windows = model::pack_input(q, c, model::Span{b, e}, {24, 5});
    std::size_t covered_end = 0;
    bool any_answer = false;
    for (const auto& w : windows) {
      CHECK(w.length() <= 24);
      CHECK(w.context_offset <= covered_end);
      covered_end = std::max(covered_end, w.context_offset + w.context.size());
      if (w.answer) {
        any_answer = true;
        CHECK(w.to_context(w.answer->begin) == b);
        CHECK(w.to_context(w.answer->end) == e);
        CHECK(w.context.contains(w.answer->begin));
        CHECK(w.context.contains(w.answer->end));
      }
    }
    CHECK(covered_end == c.size());
    // Any answer no longer than window - stride + 1 lands whole in some window.
    if (e - b + 1 + 4 <= 24 - q.size() - 3) CHECK(any_answer);
  }
}

TEST_CASE("encode shape, determinism and position sensitivity") {
  const auto m = model::QAModel::init(tiny_config());
  auto p = packed_example();
  const auto h1 = model::encode(p, m.encoder);
  const auto h2 = model::encode(p, m.encoder);
  CHECK(h1.shape() == ad::Shape{p.length(), 8});
  CHECK(std::vector<double>(h1.values().begin(), h1.values().end()) ==
        std::vector<double>(h2.values().begin(), h2.values().end()));
  auto swapped = p;
  std::swap(swapped.tokens[p.context.begin], swapped.tokens[p.context.begin + 1]);
  const auto h3 = model::encode(swapped, m.encoder);
  bool differs = false;
  for (std::size_t i = 0; i < h1.size(); ++i) differs |= h1[i] != h3[i];
  CHECK(differs);

  auto bad = p;
  bad.tokens[1] = 999;
  CHECK_THROWS_AS(model::encode(bad, m.encoder), IndexError);
}

TEST_CASE("qa_forward examples") {
  model::QAHead zero{Tensor::parameter({4, 1}, std::vector<double>(4, 0.0)),
                     Tensor::parameter({4, 1}, std::vector<double>(4, 0.0))};
  const auto h = matrix(3, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  const auto pred = model::qa_forward(h, zero);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(pred.alpha_begin[t] == doctest::Approx(1.0 / 3));
    CHECK(pred.alpha_end[t] == doctest::Approx(1.0 / 3));
  }
  // H·W1 = [0, ln 3] with a one-column H.
  model::QAHead head{Tensor::parameter({1, 1}, {1.0}), Tensor::parameter({1, 1}, {0.0})};
  const auto p2 = model::qa_forward(matrix(2, 1, {0.0, std::log(3.0)}), head);
  CHECK(p2.alpha_begin[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p2.alpha_begin[1] == doctest::Approx(0.75).epsilon(1e-12));

  const auto m = model::QAModel::init(tiny_config(4));
  const auto p = packed_example();
  const auto pr = model::qa_forward(model::encode(p, m.encoder), m.head);
  double sb = 0, se = 0;
  for (std::size_t t = 0; t < p.length(); ++t) {
    sb += pr.alpha_begin[t];
    se += pr.alpha_end[t];
  }
  CHECK(std::abs(sb - 1) < 1e-9);
  CHECK(std::abs(se - 1) < 1e-9);
}

TEST_CASE("question_repr examples") {
  PackedInput p;
  p.tokens = {0, 9, 9, 1, 10, 10, 1};
  p.question = {1, 3};
  p.context = {4, 6};
  const auto h = matrix(7, 2, {7, 7, 1, 0, 3, 2, 9, 9, 50, 60, 70, 80, 9, 9});
  const auto cls = model::question_repr(h, p, model::ReprMode::cls);
  CHECK(cls[0] == 7);
  CHECK(cls[1] == 7);
  const auto avg = model::question_repr(h, p, model::ReprMode::avg);
  CHECK(avg[0] == doctest::Approx(2.0));
  CHECK(avg[1] == doctest::Approx(1.0));
  // Context rows do not matter.
  const auto h2 = matrix(7, 2, {7, 7, 1, 0, 3, 2, 9, 9, -5, 0, 123, 4, 9, 9});
  const auto avg2 = model::question_repr(h2, p, model::ReprMode::avg);
  CHECK(avg2[0] == avg[0]);
  CHECK(avg2[1] == avg[1]);
  // All question rows equal to v give v.
  const auto h3 = matrix(7, 2, {0, 0, 4, 5, 4, 5, 0, 0, 1, 1, 1, 1, 0, 0});
  const auto avg3 = model::question_repr(h3, p, model::ReprMode::avg);
  CHECK(avg3[0] == doctest::Approx(4));
  CHECK(avg3[1] == doctest::Approx(5));

  auto empty = p;
  empty.question = {1, 1};
  CHECK_THROWS_AS(model::question_repr(h, empty, model::ReprMode::avg), DataError);
  CHECK(model::parse_repr_mode("avg") == model::ReprMode::avg);
  CHECK_THROWS_AS(model::parse_repr_mode("max"), ConfigError);
}

TEST_CASE("discriminate examples") {
  std::mt19937_64 rng(1);
  auto d = model::Discriminator::init(4, 6, rng);
  const auto dparams = d.params();
  for (auto& np : dparams.items()) {
    Tensor t = np.tensor;
    for (auto& v : t.mutable_values()) v = 0.0;
  }
  const auto p = model::discriminate(Tensor::from({1, 4}, {1, 2, 3, 4}), d);
  for (std::size_t i = 0; i < 6; ++i) CHECK(p[i] == doctest::Approx(1.0 / 6));

  auto d2 = model::Discriminator::init(4, 3, rng);
  const auto q = model::discriminate(Tensor::from({1, 4}, {0.3, -1, 2, 0.1}), d2);
  double s = 0;
  for (double v : q.values()) s += v;
  CHECK(std::abs(s - 1) < 1e-9);
}

TEST_CASE("discriminator separates a linearly separable toy set") {
  std::mt19937_64 rng(3);
  auto d = model::Discriminator::init(4, 2, rng);
  const auto params = d.params();
  trainer::AdamState opt;
  const auto x = Tensor::from({2, 4}, {1, 0.5, -0.2, 0.3, -1, 0.1, 0.4, -0.6});
  for (int step = 0; step < 200; ++step) {
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const auto p = model::discriminate(x, d);
    const std::vector<objectives::LossValue> losses{
        objectives::discriminator_loss(ad::slice_rows(p, 0, 1), 0),
        objectives::discriminator_loss(ad::slice_rows(p, 1, 2), 1)};
    tape.backward(objectives::mean_loss(losses).value);
    trainer::adam_step(params, opt, 1e-3);
  }
  const auto p = model::discriminate(x, d);
  CHECK(p.at(0, 0) > p.at(0, 1));
  CHECK(p.at(1, 1) > p.at(1, 0));
}

TEST_CASE("extract_answer examples") {
  std::vector<double> b(8, 0.0), e(8, 0.0);
  b[5] = 1.0;
  e[6] = 1.0;
  auto r = model::extract_answer(b, e, {4, 8}, 8);
  CHECK(r.begin == 5);
  CHECK(r.end == 6);
  CHECK(r.score == doctest::Approx(1.0));

  std::vector<double> b2(8, 0.01), e2(8, 0.01);
  b2[6] = 0.9;
  e2[5] = 0.9;
  const auto r2 = model::extract_answer(b2, e2, {4, 8}, 8);
  CHECK(r2.begin <= r2.end);

  const std::vector<double> b3{.1, .6, .3}, e3{.2, .2, .6};
  const auto r3 = model::extract_answer(b3, e3, {0, 3}, 3);
  CHECK(r3.begin == 1);
  CHECK(r3.end == 2);
  CHECK(r3.score == doctest::Approx(0.36));
}

TEST_CASE("extract_answer agrees with exhaustive enumeration") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    std::uniform_int_distribution<std::size_t> len(2, 32);
    const std::size_t T = len(rng);
    std::vector<double> b(T), e(T);
    for (auto& v : b) v = u(rng);
    for (auto& v : e) v = u(rng);
    std::uniform_int_distribution<std::size_t> start(0, T - 1);
    const std::size_t cb = start(rng);
    std::uniform_int_distribution<std::size_t> stop(cb + 1, T);
    const model::Range ctx{cb, stop(rng)};
    std::uniform_int_distribution<std::size_t> ml(1, 8);
    const std::size_t max_len = ml(rng);
    double best = -1;
    for (std::size_t i = ctx.begin; i < ctx.end; ++i)
      for (std::size_t j = i; j < ctx.end && j - i < max_len; ++j) best = std::max(best, b[i] * e[j]);
    const auto r = model::extract_answer(b, e, ctx, max_len);
    CHECK(r.score == doctest::Approx(best));
    CHECK(r.begin <= r.end);
    CHECK(r.end - r.begin < max_len);
    CHECK(ctx.contains(r.begin));
    CHECK(ctx.contains(r.end));
  }
}

TEST_CASE("full encoder and QA loss gradient matches finite differences") {
  for (std::uint64_t seed : {1, 2}) {
    auto m = model::QAModel::init(tiny_config(seed));
    const auto p = packed_example();
    const auto params = m.params();
    const auto res = testing::grad_check(
        [&] {
          const auto pred = model::qa_forward(model::encode(p, m.encoder), m.head);
          return objectives::qa_loss(pred, p.answer->begin, p.answer->end).value;
        },
        params.items(), {.eps = 1e-5, .rel_tol = 1e-3, .abs_floor = 1e-7});
    CAPTURE(res.worst_where);
    CAPTURE(res.worst_rel);
    CHECK(res.checked == params.num_values());
    CHECK(res.ok());
  }
}

TEST_CASE("freeze guard blocks gradient accumulation") {
  auto m = model::QAModel::init(tiny_config());
  const auto p = packed_example();
  const auto params = m.params();
  {
    model::FreezeGuard freeze(params);
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const auto pred = model::qa_forward(model::encode(p, m.encoder), m.head);
    CHECK(tape.size() == 0);
    (void)pred;
  }
  for (const auto& np : params.items()) CHECK(np.tensor.requires_grad());
}

TEST_CASE("encoder config validation") {
  auto c = tiny_config();
  c.hidden_dim = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(model::EncoderConfig::desk().validate());
  const auto desk = model::EncoderConfig::desk();
  CHECK(desk.num_layers == 2);
  CHECK(desk.num_heads == 2);
  CHECK(desk.hidden_dim == 64);
  CHECK(desk.ff_dim == 256);
  CHECK(desk.max_seq_len == 64);
  const auto ref = model::EncoderConfig::reference();
  CHECK(ref.num_layers == 12);
  CHECK(ref.hidden_dim == 768);
  CHECK(ref.max_seq_len == 384);
}
