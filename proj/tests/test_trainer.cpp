#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support/gradcheck.hpp"
#include "xlqa/augment.hpp"
#include "xlqa/errors.hpp"
#include "xlqa/objectives.hpp"
#include "xlqa/trainer.hpp"

using namespace xlqa;
using trainer::Method;
using trainer::TrainConfig;

namespace {

struct Fixture {
  corpus::World world = corpus::generate_world(6, 2, 512);
  std::vector<corpus::RawExample> base = corpus::generate_examples(world, 24, 3, "t");
  augment::AugmentedDataset tq;
  std::vector<std::string> langs;
  model::EncoderConfig enc;

  Fixture() {
    augment::SyntheticTranslator tr(world);
    tq = augment::build_translate_q(base, world, tr);
    langs = world.language_codes();
    enc.hidden_dim = 16;
    enc.ff_dim = 32;
    enc.vocab_size = world.vocab.size();
    enc.seed = 5;
  }

  TrainConfig config(const std::string& method) const {
    auto c = TrainConfig::defaults_for(trainer::parse_method(method));
    c.batch_size = 4;
    c.seed = 11;
    return c;
  }
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

std::vector<std::vector<double>> snapshot(const model::ParamSet& p) {
  std::vector<std::vector<double>> out;
  for (const auto& np : p.items()) out.emplace_back(np.tensor.values().begin(), np.tensor.values().end());
  return out;
}

}  // namespace

TEST_CASE("method parsing") {
  CHECK(trainer::parse_method("ZS").method == Method::zs);
  const auto s = trainer::parse_method("AT_single(l2)");
  CHECK(s.method == Method::at_single);
  CHECK(s.language == "l2");
  CHECK(s.single());
  CHECK(trainer::to_string(s) == "AT_single(l2)");
  CHECK(trainer::parse_method("LAF_PSAQS_all").regime() == trainer::Regime::laf_psaqs);
  CHECK(trainer::parse_method("LAF_PSA_all").regime() == trainer::Regime::laf_psa);
  CHECK(trainer::parse_method("TALL").regime() == trainer::Regime::supervised);
  CHECK_THROWS_AS(trainer::parse_method("AT_single"), ConfigError);
  CHECK_THROWS_AS(trainer::parse_method("ZS(l1)"), ConfigError);
  CHECK_THROWS_AS(trainer::parse_method("GAN"), ConfigError);
  const std::vector<std::string> avail{"en", "l1", "l2"};
  CHECK(trainer::method_languages(s, avail) == std::vector<std::string>{"en", "l2"});
  CHECK(trainer::method_languages(trainer::parse_method("AT_all"), avail) == avail);
}

TEST_CASE("config defaults and validation") {
  const auto zs = TrainConfig::defaults_for(trainer::parse_method("ZS"));
  CHECK(zs.epochs == 3);
  CHECK(zs.learning_rate == 1e-3);
  CHECK(zs.lambda_adv == 1.0);
  CHECK(TrainConfig::defaults_for(trainer::parse_method("TQ")).epochs == 1);
  CHECK(TrainConfig::defaults_for(trainer::parse_method("AT_all")).repr_mode == model::ReprMode::cls);
  CHECK(TrainConfig::defaults_for(trainer::parse_method("LAF_PSA_all")).repr_mode == model::ReprMode::avg);
  auto bad = zs;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = zs;
  bad.lambda_qs = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = zs;
  bad.learning_rate = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("adam first step moves each weight by the learning rate against the gradient sign") {
  model::ParamSet ps;
  auto w = ad::Tensor::parameter({4}, {1, 2, 3, 4});
  ps.add("w", w);
  const std::vector<std::vector<double>> grads{{0.5, -2.0, 1e-3, -7.0}};
  trainer::AdamState st;
  trainer::adam_step(ps, grads, st, 0.01);
  CHECK(st.t == 1);
  const std::vector<double> expect{0.99, 2.01, 2.99, 4.01};
  for (std::size_t i = 0; i < 4; ++i) CHECK(w[i] == doctest::Approx(expect[i]).epsilon(1e-6));

  // The tensor-gradient overload matches and clears the gradients.
  model::ParamSet ps2;
  auto w2 = ad::Tensor::parameter({4}, {1, 2, 3, 4});
  ps2.add("w", w2);
  {
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const auto c = ad::Tensor::from({4}, {0.5, -2.0, 1e-3, -7.0});
    tape.backward(ad::sum(ad::mul(w2, c)));
  }
  trainer::AdamState st2;
  trainer::adam_step(ps2, st2, 0.01);
  for (std::size_t i = 0; i < 4; ++i) CHECK(w2[i] == w[i]);
  CHECK(w2.grad() == std::vector<double>(4, 0.0));
  CHECK(st2 == st);
  CHECK(trainer::AdamState::zeros_like(ps).m.size() == 1);
}

TEST_CASE("features and pairs") {
  const auto& f = fx();
  const auto feats = trainer::make_features(f.tq.examples, f.world.vocab, {64, 16}, f.langs);
  CHECK(feats.size() >= f.tq.examples.size());
  for (const auto& x : feats) {
    CHECK(x.packed.answer.has_value());
    CHECK(x.label < f.langs.size());
  }
  const auto pairs = trainer::make_pairs(f.tq.examples, f.world.vocab, {64, 16});
  CHECK(pairs.size() >= f.base.size() * 2);
  for (const auto& p : pairs) {
    CHECK(p.english.length() == p.translated.length() - p.translated.question.size() +
                                    p.english.question.size());
    CHECK(p.english.context_offset == p.translated.context_offset);
  }
  // An orphan translation names itself.
  std::vector<corpus::RawExample> orphan{f.tq.examples.back()};
  try {
    trainer::make_pairs(orphan, f.world.vocab, {64, 16});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(orphan[0].id) != std::string::npos);
  }
  const std::vector<std::string> only_en{"en"};
  CHECK_THROWS_AS(trainer::make_features(f.tq.examples, f.world.vocab, {64, 16}, only_en), DataError);
}

TEST_CASE("batching covers every item once per epoch") {
  auto cfg = fx().config("ZS");
  cfg.epochs = 2;
  CHECK(trainer::steps_per_epoch(10, 4) == 3);
  CHECK(trainer::total_steps(10, cfg) == 6);
  for (std::size_t epoch = 0; epoch < 2; ++epoch) {
    std::vector<int> seen(10, 0);
    for (std::size_t s = 0; s < 3; ++s)
      for (auto i : trainer::batch_indices(10, cfg, epoch * 3 + s)) ++seen[i];
    for (int c : seen) CHECK(c == 1);
  }
  CHECK(trainer::batch_indices(10, cfg, 0) != trainer::batch_indices(10, cfg, 3));
}

TEST_CASE("supervised trace length and determinism") {
  const auto& f = fx();
  auto cfg = f.config("ZS");
  cfg.epochs = 2;
  const auto feats = trainer::make_features(f.base, f.world.vocab, cfg.packing);
  auto m1 = model::QAModel::init(f.enc);
  trainer::TrainState s1;
  const auto r = trainer::train_supervised(m1, feats, cfg, s1);
  CHECK(r.trace.size() == cfg.epochs * ((feats.size() + cfg.batch_size - 1) / cfg.batch_size));
  CHECK(r.steps == r.trace.size());
  CHECK(r.optimizer_steps == r.steps);
  auto m2 = model::QAModel::init(f.enc);
  trainer::TrainState s2;
  trainer::train_supervised(m2, feats, cfg, s2);
  CHECK(snapshot(m1.params()) == snapshot(m2.params()));
  CHECK(s1 == s2);
}

TEST_CASE("adversarial freeze discipline and traces") {
  const auto& f = fx();
  auto cfg = f.config("AT_all");
  const auto feats = trainer::make_features(f.tq.examples, f.world.vocab, cfg.packing, f.langs);
  auto m = model::QAModel::init(f.enc);
  std::mt19937_64 rng(1);
  auto d = model::Discriminator::init(f.enc.hidden_dim, f.langs.size(), rng);
  const auto qa_params = m.params();
  const auto disc_params = d.params();
  std::vector<std::vector<double>> disc_before, qa_before;
  std::vector<std::string> phases;
  std::size_t violations = 0;
  trainer::TrainHooks hooks;
  hooks.max_steps = 6;
  hooks.after_phase = [&](std::string_view phase) {
    phases.emplace_back(phase);
    if (phase == "qa_update") {
      disc_before = snapshot(disc_params);
      qa_before = snapshot(qa_params);
    } else if (phase == "disc_recompute") {
      violations += snapshot(disc_params) != disc_before;
      violations += snapshot(qa_params) != qa_before;
    } else if (phase == "disc_update") {
      violations += snapshot(qa_params) != qa_before;
      violations += snapshot(disc_params) == disc_before;  // the discriminator must move
    }
  };
  trainer::TrainState st;
  const auto r = trainer::train_adversarial(m, d, feats, cfg, st, hooks);
  CHECK(violations == 0);
  CHECK(r.steps == 6);
  CHECK(r.optimizer_steps == 12);
  CHECK(phases.size() == 18);
  CHECK(phases[0] == "qa_update");
  CHECK(phases[1] == "disc_recompute");
  CHECK(phases[2] == "disc_update");
  std::set<std::string> names;
  for (const auto& row : r.trace) names.insert(row.name);
  CHECK(names == std::set<std::string>{"qa", "adv", "disc", "disc_accuracy"});

  auto bad = feats;
  bad[0].label = 99;
  trainer::TrainState st2;
  CHECK_THROWS_AS(trainer::train_adversarial(m, d, bad, cfg, st2), DataError);
}

TEST_CASE("zero adversarial weight reduces to supervised training") {
  const auto& f = fx();
  auto cfg = f.config("AT_all");
  cfg.lambda_adv = 0.0;
  const auto feats = trainer::make_features(f.tq.examples, f.world.vocab, cfg.packing, f.langs);
  auto a = model::QAModel::init(f.enc);
  auto b = model::QAModel::init(f.enc);
  std::mt19937_64 rng(1);
  auto d = model::Discriminator::init(f.enc.hidden_dim, f.langs.size(), rng);
  trainer::TrainHooks hooks;
  hooks.max_steps = 8;
  trainer::TrainState sa, sb;
  trainer::train_adversarial(a, d, feats, cfg, sa, hooks);
  trainer::train_supervised(b, feats, cfg, sb, hooks);
  CHECK(snapshot(a.params()) == snapshot(b.params()));
  CHECK(sa.qa == sb.qa);
}

TEST_CASE("LAF step counts and phase order") {
  const auto& f = fx();
  const auto pairs = trainer::make_pairs(f.tq.examples, f.world.vocab, {64, 16});
  for (auto variant : {trainer::LafVariant::psa, trainer::LafVariant::psa_qs}) {
    auto cfg = f.config(variant == trainer::LafVariant::psa ? "LAF_PSA_all" : "LAF_PSAQS_all");
    auto m = model::QAModel::init(f.enc);
    trainer::TrainHooks hooks;
    hooks.max_steps = 3;
    std::vector<std::string> phases;
    hooks.after_phase = [&](std::string_view p) { phases.emplace_back(p); };
    trainer::TrainState st;
    const auto r = trainer::train_laf(m, pairs, cfg, variant, st, hooks);
    const std::size_t per = variant == trainer::LafVariant::psa ? 2 : 3;
    CHECK(r.steps == 3);
    CHECK(r.optimizer_steps == per * 3);
    CHECK(phases.size() == per * 3);
    CHECK(phases[0] == "qa");
    CHECK(phases[1] == "psa");
    if (per == 3) CHECK(phases[2] == "qs");
    std::set<std::string> names;
    for (const auto& row : r.trace) names.insert(row.name);
    if (per == 3) CHECK(names == std::set<std::string>{"qa_en", "qa_l", "psa", "qs", "cosine"});
    else CHECK(names == std::set<std::string>{"qa_en", "qa_l", "psa"});
  }
}

TEST_CASE("zero LAF weights reduce to supervised training on the same pairs") {
  const auto& f = fx();
  auto enc = f.enc;
  enc.dropout_rate = 0.0;
  const auto all_pairs = trainer::make_pairs(f.tq.examples, f.world.vocab, {64, 16});
  const std::vector<trainer::PairFeature> pairs(all_pairs.begin(), all_pairs.begin() + 6);
  auto cfg = f.config("LAF_PSAQS_all");
  cfg.lambda_psa = 0.0;
  cfg.lambda_qs = 0.0;
  cfg.batch_size = 2;
  auto sup_cfg = cfg;
  sup_cfg.batch_size = 4;
  // Lay the flat examples out so each supervised batch visits the same
  // examples in the same order as the matching pair batch.
  std::vector<trainer::Feature> flat(2 * pairs.size());
  for (std::size_t step = 0; step < 3; ++step) {
    const auto p = trainer::batch_indices(pairs.size(), cfg, step);
    const auto q = trainer::batch_indices(flat.size(), sup_cfg, step);
    for (std::size_t j = 0; j < p.size(); ++j) {
      flat[q[2 * j]] = {pairs[p[j]].id + "/en", pairs[p[j]].english, 0};
      flat[q[2 * j + 1]] = {pairs[p[j]].id, pairs[p[j]].translated, 1};
    }
  }
  auto a = model::QAModel::init(enc);
  auto b = model::QAModel::init(enc);
  trainer::TrainState sa, sb;
  const auto r = trainer::train_laf(a, pairs, cfg, trainer::LafVariant::psa_qs, sa);
  trainer::train_supervised(b, flat, sup_cfg, sb);
  CHECK(r.optimizer_steps == 3);
  CHECK(snapshot(a.params()) == snapshot(b.params()));
  CHECK(sa.qa == sb.qa);
}

TEST_CASE("nonfinite losses abort with a numeric error") {
  const auto& f = fx();
  auto cfg = f.config("ZS");
  cfg.learning_rate = 1e300;
  const auto feats = trainer::make_features(f.base, f.world.vocab, cfg.packing);
  auto m = model::QAModel::init(f.enc);
  trainer::TrainState st;
  CHECK_THROWS_AS(trainer::train_supervised(m, feats, cfg, st), NumericError);
}

TEST_CASE("combined adversarial objective gradient with a fixed discriminator") {
  auto enc = fx().enc;
  enc.hidden_dim = 8;
  enc.ff_dim = 16;
  enc.dropout_rate = 0.0;
  auto m = model::QAModel::init(enc);
  std::mt19937_64 rng(2);
  auto d = model::Discriminator::init(8, 3, rng);
  const auto feats = trainer::make_features(fx().base, fx().world.vocab, {64, 16});
  const auto& p = feats.front().packed;
  const auto params = m.params();
  const auto disc_params = d.params();
  model::FreezeGuard freeze(disc_params);
  const auto res = testing::grad_check(
      [&] {
        const auto h = model::encode(p, m.encoder);
        const auto qa = objectives::qa_loss(model::qa_forward(h, m.head), p.answer->begin,
                                            p.answer->end);
        const auto adv = objectives::adversarial_loss(
            model::discriminate(model::question_repr(h, p, model::ReprMode::cls), d));
        return ad::add(qa.value, adv.value);
      },
      params.items(), {.rel_tol = 1e-3, .max_per_tensor = 24, .seed = 3});
  CAPTURE(res.worst_where);
  CHECK(res.ok());
}

TEST_CASE("overfit sanity at the desk preset") {
  const auto world = corpus::generate_world(8, 1, 512);
  const auto base = corpus::generate_examples(world, 50, 8);
  auto enc = model::EncoderConfig::desk();
  enc.vocab_size = world.vocab.size();
  auto m = model::QAModel::init(enc);
  auto cfg = TrainConfig::defaults_for(trainer::parse_method("ZS"));
  cfg.epochs = 100;
  const auto feats = trainer::make_features(base, world.vocab, cfg.packing);
  trainer::TrainState st;
  const auto r = trainer::train_supervised(m, feats, cfg, st);
  REQUIRE(r.trace.size() == 100 * ((feats.size() + 15) / 16));
  const double initial = r.trace.front().value;
  const double final_loss = r.trace.back().value;
  CAPTURE(initial);
  CAPTURE(final_loss);
  CHECK(final_loss < 0.1 * initial);
}

TEST_CASE("probe and cosine diagnostics") {
  const auto& f = fx();
  auto cfg = f.config("AT_all");
  const auto feats = trainer::make_features(f.tq.examples, f.world.vocab, cfg.packing, f.langs);
  const auto m = model::QAModel::init(f.enc);
  const auto probe = trainer::probe_language(m, feats, feats, f.langs.size(), cfg);
  CHECK(probe.train_accuracy >= 0.0);
  CHECK(probe.train_accuracy <= 1.0);
  const auto again = trainer::probe_language(m, feats, feats, f.langs.size(), cfg);
  CHECK(again.train_accuracy == probe.train_accuracy);
  const auto pairs = trainer::make_pairs(f.tq.examples, f.world.vocab, {64, 16});
  const double cos = trainer::mean_question_cosine(m, pairs);
  CHECK(cos <= 1.0);
  CHECK(cos >= -1.0);
  CHECK_THROWS_AS(trainer::mean_question_cosine(m, {}), DataError);
}
