#include "xlqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "xlqa/augment.hpp"
#include "xlqa/errors.hpp"
#include "xlqa/objectives.hpp"

namespace xlqa::trainer {

using ad::Tensor;
using objectives::LossValue;

// ---- methods --------------------------------------------------------------

Regime MethodSpec::regime() const {
  switch (method) {
    case Method::at_single:
    case Method::at_all: return Regime::adversarial;
    case Method::laf_psa_single:
    case Method::laf_psa_all: return Regime::laf_psa;
    case Method::laf_psaqs_single:
    case Method::laf_psaqs_all: return Regime::laf_psaqs;
    default: return Regime::supervised;
  }
}

bool MethodSpec::single() const {
  return method == Method::at_single || method == Method::laf_psa_single ||
         method == Method::laf_psaqs_single;
}

namespace {

const std::map<std::string, Method>& method_names() {
  static const std::map<std::string, Method> names = {
      {"ZS", Method::zs},
      {"TQ", Method::tq},
      {"TC", Method::tc},
      {"TQC", Method::tqc},
      {"TALL", Method::tall},
      {"AT_single", Method::at_single},
      {"AT_all", Method::at_all},
      {"LAF_PSA_single", Method::laf_psa_single},
      {"LAF_PSA_all", Method::laf_psa_all},
      {"LAF_PSAQS_single", Method::laf_psaqs_single},
      {"LAF_PSAQS_all", Method::laf_psaqs_all},
  };
  return names;
}

}  // namespace

MethodSpec parse_method(const std::string& name) {
  std::string base = name;
  std::string lang;
  const auto open = name.find('(');
  if (open != std::string::npos) {
    if (name.back() != ')' || open + 2 > name.size() - 1) {
      throw ConfigError("malformed method '" + name + "'");
    }
    base = name.substr(0, open);
    lang = name.substr(open + 1, name.size() - open - 2);
  }
  const auto it = method_names().find(base);
  if (it == method_names().end()) throw ConfigError("unknown method '" + name + "'");
  MethodSpec spec{it->second, lang};
  if (spec.single() && lang.empty()) {
    throw ConfigError("method '" + base + "' needs a language, e.g. " + base + "(l1)");
  }
  if (!spec.single() && !lang.empty()) {
    throw ConfigError("method '" + base + "' takes no language");
  }
  return spec;
}

std::string to_string(const MethodSpec& spec) {
  for (const auto& [name, m] : method_names()) {
    if (m == spec.method) return spec.single() ? name + "(" + spec.language + ")" : name;
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be > 0");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  for (double w : {lambda_adv, lambda_psa, lambda_qs}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be >= 0");
  }
  if (packing.doc_stride < 1) throw ConfigError("doc_stride must be >= 1");
  if (max_answer_len < 1) throw ConfigError("max_answer_len must be >= 1");
  if (method.single() && method.language.empty()) {
    throw ConfigError("single-language method without a language");
  }
}

TrainConfig TrainConfig::defaults_for(const MethodSpec& method) {
  TrainConfig c;
  c.method = method;
  c.epochs = method.method == Method::zs ? 3 : 1;
  const auto r = method.regime();
  c.repr_mode = (r == Regime::laf_psa || r == Regime::laf_psaqs) ? model::ReprMode::avg
                                                                 : model::ReprMode::cls;
  return c;
}

// ---- optimizer ------------------------------------------------------------

AdamState AdamState::zeros_like(const ParamSet& params) {
  AdamState s;
  for (const auto& p : params.items()) {
    s.m.emplace_back(p.tensor.size(), 0.0);
    s.v.emplace_back(p.tensor.size(), 0.0);
  }
  return s;
}

namespace {

void check_state(const ParamSet& params, AdamState& state) {
  if (!state.initialized()) state = AdamState::zeros_like(params);
  const auto items = params.items();
  if (state.m.size() != items.size() || state.v.size() != items.size()) {
    throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) +
                     " buffers for " + std::to_string(items.size()) + " parameters");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (state.m[i].size() != items[i].tensor.size() ||
        state.v[i].size() != items[i].tensor.size()) {
      throw ShapeError("adam_step: buffer size mismatch for " + items[i].name);
    }
  }
}

void adam_update(Tensor tensor, std::span<const double> g, std::vector<double>& m,
                 std::vector<double>& v, const AdamState& s, double lr) {
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  auto theta = tensor.mutable_values();
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double gj = g.empty() ? 0.0 : g[j];
    m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * gj;
    v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * gj * gj;
    theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + s.eps);
  }
}

}  // namespace

void adam_step(const ParamSet& params, std::span<const std::vector<double>> grads,
               AdamState& state, double learning_rate) {
  check_state(params, state);
  const auto items = params.items();
  if (grads.size() != items.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(items.size()) + " parameters");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (grads[i].size() != items[i].tensor.size()) {
      throw ShapeError("adam_step: gradient size mismatch for " + items[i].name);
    }
  }
  ++state.t;
  for (std::size_t i = 0; i < items.size(); ++i) {
    adam_update(items[i].tensor, grads[i], state.m[i], state.v[i], state, learning_rate);
  }
}

void adam_step(const ParamSet& params, AdamState& state, double learning_rate) {
  check_state(params, state);
  ++state.t;
  const auto items = params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto* impl = items[i].tensor.impl();
    adam_update(items[i].tensor, impl->grad, state.m[i], state.v[i], state, learning_rate);
  }
  params.zero_grad();
}

// ---- features -------------------------------------------------------------

namespace {

std::size_t label_of(const std::string& lang, std::span<const std::string> languages,
                     const std::string& id) {
  const auto it = std::find(languages.begin(), languages.end(), lang);
  if (it == languages.end()) {
    throw DataError("example " + id + " has question language '" + lang +
                    "' outside the label set");
  }
  return static_cast<std::size_t>(it - languages.begin());
}

std::optional<model::Span> gold_span(const corpus::RawExample& ex) {
  return model::Span{ex.answer.begin, ex.answer.end};
}

}  // namespace

std::vector<Feature> make_features(std::span<const corpus::RawExample> examples,
                                   const corpus::Vocabulary& vocab,
                                   const model::PackingConfig& packing,
                                   std::span<const std::string> languages) {
  std::vector<Feature> out;
  for (const auto& ex : examples) {
    const std::size_t label = languages.empty() ? 0 : label_of(ex.q_lang, languages, ex.id);
    const auto q = vocab.encode(ex.question);
    const auto c = vocab.encode(ex.context);
    for (auto& packed : model::pack_input(q, c, gold_span(ex), packing)) {
      if (!packed.answer) continue;
      out.push_back({ex.id, std::move(packed), label});
    }
  }
  return out;
}

std::vector<PairFeature> make_pairs(std::span<const corpus::RawExample> examples,
                                    const corpus::Vocabulary& vocab,
                                    const model::PackingConfig& packing,
                                    std::span<const std::string> languages) {
  std::map<std::string, const corpus::RawExample*> english;
  for (const auto& ex : examples) {
    if (ex.q_lang == corpus::kEnglish && ex.c_lang == corpus::kEnglish) english[ex.id] = &ex;
  }
  std::vector<PairFeature> out;
  for (const auto& ex : examples) {
    if (ex.q_lang == corpus::kEnglish) continue;
    if (!languages.empty() &&
        std::find(languages.begin(), languages.end(), ex.q_lang) == languages.end()) {
      continue;
    }
    const auto it = english.find(augment::source_id(ex.id));
    if (it == english.end() || ex.c_lang != corpus::kEnglish ||
        it->second->context != ex.context || it->second->answer != ex.answer) {
      throw DataError("unpaired example " + ex.id + ": no English source with the same context");
    }
    const auto q_en = vocab.encode(it->second->question);
    const auto q_l = vocab.encode(ex.question);
    const auto c = vocab.encode(ex.context);
    for (auto& [a, b] : model::pack_pair(q_en, q_l, c, gold_span(ex), packing)) {
      if (!a.answer) continue;
      out.push_back({ex.id, std::move(a), std::move(b)});
    }
  }
  return out;
}

std::vector<std::string> method_languages(const MethodSpec& method,
                                          std::span<const std::string> available) {
  std::vector<std::string> out = {corpus::kEnglish};
  if (method.single()) {
    if (std::find(available.begin(), available.end(), method.language) == available.end()) {
      throw ConfigError("method language '" + method.language + "' is not available");
    }
    out.push_back(method.language);
    return out;
  }
  for (const auto& l : available) {
    if (l != corpus::kEnglish) out.push_back(l);
  }
  return out;
}

// ---- training -------------------------------------------------------------

std::size_t steps_per_epoch(std::size_t num_items, std::size_t batch_size) {
  return (num_items + batch_size - 1) / batch_size;
}

std::size_t total_steps(std::size_t num_items, const TrainConfig& config) {
  return config.epochs * steps_per_epoch(num_items, config.batch_size);
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(model::mix_seed(seed, 0x5EED0000ULL + epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

std::vector<std::size_t> batch_indices(std::size_t num_items, const TrainConfig& config,
                                       std::size_t step) {
  const std::size_t per_epoch = steps_per_epoch(num_items, config.batch_size);
  const auto order = epoch_order(num_items, config.seed, step / per_epoch);
  const std::size_t begin = (step % per_epoch) * config.batch_size;
  const std::size_t end = std::min(num_items, begin + config.batch_size);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin),
          order.begin() + static_cast<std::ptrdiff_t>(end)};
}

namespace {

enum Phase : std::uint64_t { kPhaseQa = 1, kPhaseDisc = 2, kPhasePsa = 3, kPhaseQs = 4 };

std::mt19937_64 phase_rng(const TrainConfig& config, std::size_t step, Phase phase) {
  return std::mt19937_64(model::mix_seed(model::mix_seed(config.seed, step), phase));
}

// Caches the epoch permutation so a step only slices it.
class BatchPlan {
 public:
  BatchPlan(std::size_t n, const TrainConfig& config) : n_(n), config_(config) {}

  std::vector<std::size_t> batch(std::size_t step) {
    const std::size_t per_epoch = steps_per_epoch(n_, config_.batch_size);
    const std::size_t epoch = step / per_epoch;
    if (epoch != epoch_) {
      order_ = epoch_order(n_, config_.seed, epoch);
      epoch_ = epoch;
    }
    const std::size_t begin = (step % per_epoch) * config_.batch_size;
    const std::size_t end = std::min(n_, begin + config_.batch_size);
    return {order_.begin() + static_cast<std::ptrdiff_t>(begin),
            order_.begin() + static_cast<std::ptrdiff_t>(end)};
  }

 private:
  std::size_t n_;
  const TrainConfig& config_;
  std::size_t epoch_ = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order_;
};

class Recorder {
 public:
  Recorder(TrainResult& result, const TrainHooks& hooks) : result_(result), hooks_(hooks) {}

  void emit(std::size_t step, const std::string& name, double value) {
    TraceRow row{step, name, value};
    if (hooks_.on_trace) hooks_.on_trace(row);
    result_.trace.push_back(std::move(row));
  }

  void phase(std::string_view name) {
    if (hooks_.after_phase) hooks_.after_phase(name);
  }

 private:
  TrainResult& result_;
  const TrainHooks& hooks_;
};

double checked(const LossValue& loss, std::size_t step) {
  const double v = loss.item();
  if (!std::isfinite(v)) {
    throw NumericError("nonfinite " + objectives::to_string(loss.tag) + " loss at step " +
                       std::to_string(step));
  }
  return v;
}

void require_data(std::size_t n, const char* what) {
  if (n == 0) throw DataError(std::string(what) + ": empty training set");
}

std::size_t last_step(std::size_t total, const TrainState& state, const TrainHooks& hooks) {
  if (hooks.max_steps == 0) return total;
  return std::min<std::size_t>(total, state.step + hooks.max_steps);
}

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

// Maps a span of one packing onto another packing of the same context window.
model::Span remap(const model::ExtractedSpan& span, const PackedInput& from,
                  const PackedInput& to) {
  const auto shift = [&](std::size_t pos) { return pos - from.context.begin + to.context.begin; };
  return {shift(span.begin), shift(span.end)};
}

}  // namespace

TrainResult train_supervised(QAModel& model, std::span<const Feature> data,
                             const TrainConfig& config, TrainState& state,
                             const TrainHooks& hooks) {
  config.validate();
  require_data(data.size(), "train_supervised");
  TrainResult result;
  Recorder rec(result, hooks);
  const auto params = model.params();
  BatchPlan plan(data.size(), config);
  const std::size_t end = last_step(total_steps(data.size(), config), state, hooks);
  for (; state.step < end; ++state.step) {
    const std::size_t step = state.step;
    auto rng = phase_rng(config, step, kPhaseQa);
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    std::vector<LossValue> losses;
    for (auto i : plan.batch(step)) {
      const auto& f = data[i];
      const auto h = model::encode(f.packed, model.encoder, &rng);
      const auto pred = model::qa_forward(h, model.head);
      losses.push_back(objectives::qa_loss(pred, f.packed.answer->begin, f.packed.answer->end));
    }
    const auto loss = objectives::mean_loss(losses);
    const double value = checked(loss, step);
    tape.backward(loss.value);
    adam_step(params, state.qa, config.learning_rate);
    ++result.optimizer_steps;
    rec.emit(step, "qa", value);
    rec.phase("qa");
    ++result.steps;
  }
  return result;
}

TrainResult train_adversarial(QAModel& model, Discriminator& disc,
                              std::span<const Feature> data, const TrainConfig& config,
                              TrainState& state, const TrainHooks& hooks) {
  config.validate();
  require_data(data.size(), "train_adversarial");
  const std::size_t labels = disc.num_labels();
  for (const auto& f : data) {
    if (f.label >= labels) {
      throw DataError("example " + f.id + " has language label " + std::to_string(f.label) +
                      " outside " + std::to_string(labels) + " discriminator labels");
    }
  }
  TrainResult result;
  Recorder rec(result, hooks);
  const auto qa_params = model.params();
  const auto disc_params = disc.params();
  BatchPlan plan(data.size(), config);
  const std::size_t end = last_step(total_steps(data.size(), config), state, hooks);
  for (; state.step < end; ++state.step) {
    const std::size_t step = state.step;
    const auto batch = plan.batch(step);

    // (i)-(ii): QA step against the frozen discriminator.
    {
      model::FreezeGuard freeze(disc_params);
      auto rng = phase_rng(config, step, kPhaseQa);
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      std::vector<LossValue> qa, adv;
      for (auto i : batch) {
        const auto& f = data[i];
        const auto h = model::encode(f.packed, model.encoder, &rng);
        const auto pred = model::qa_forward(h, model.head);
        qa.push_back(objectives::qa_loss(pred, f.packed.answer->begin, f.packed.answer->end));
        const auto probs =
            model::discriminate(model::question_repr(h, f.packed, config.repr_mode), disc);
        adv.push_back(objectives::adversarial_loss(probs));
      }
      const auto qa_loss = objectives::mean_loss(qa);
      const auto adv_loss = objectives::mean_loss(adv);
      const double qa_value = checked(qa_loss, step);
      const double adv_value = checked(adv_loss, step);
      const Tensor total = ad::add(qa_loss.value, ad::scale(adv_loss.value, config.lambda_adv));
      tape.backward(total);
      adam_step(qa_params, state.qa, config.learning_rate);
      ++result.optimizer_steps;
      rec.emit(step, "qa", qa_value);
      rec.emit(step, "adv", adv_value);
    }
    rec.phase("qa_update");

    // (iii): representations under the updated encoder, cut from the record.
    std::vector<Tensor> reprs;
    {
      ad::NoGradScope no_grad;
      for (auto i : batch) {
        const auto& f = data[i];
        const auto h = model::encode(f.packed, model.encoder);
        reprs.push_back(ad::detach(model::question_repr(h, f.packed, config.repr_mode)));
      }
    }
    rec.phase("disc_recompute");

    // (iv): discriminator step on the detached batch.
    {
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      const auto probs = model::discriminate(ad::concat_rows(reprs), disc);
      std::vector<LossValue> losses;
      std::size_t correct = 0;
      for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto& f = data[batch[r]];
        const auto row = ad::slice_rows(probs, r, r + 1);
        losses.push_back(objectives::discriminator_loss(row, f.label));
        if (argmax_row(row.values()) == f.label) ++correct;
      }
      const auto loss = objectives::mean_loss(losses);
      const double value = checked(loss, step);
      tape.backward(loss.value);
      adam_step(disc_params, state.disc, config.learning_rate);
      ++result.optimizer_steps;
      rec.emit(step, "disc", value);
      rec.emit(step, "disc_accuracy",
               static_cast<double>(correct) / static_cast<double>(batch.size()));
    }
    rec.phase("disc_update");
    ++result.steps;
  }
  return result;
}

TrainResult train_laf(QAModel& model, std::span<const PairFeature> data,
                      const TrainConfig& config, LafVariant variant, TrainState& state,
                      const TrainHooks& hooks) {
  config.validate();
  require_data(data.size(), "train_laf");
  TrainResult result;
  Recorder rec(result, hooks);
  const auto params = model.params();
  BatchPlan plan(data.size(), config);
  const std::size_t end = last_step(total_steps(data.size(), config), state, hooks);
  for (; state.step < end; ++state.step) {
    const std::size_t step = state.step;
    const auto batch = plan.batch(step);

    // (1): joint QA step on both members of every pair.
    {
      auto rng = phase_rng(config, step, kPhaseQa);
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      std::vector<LossValue> en, tr, all;
      for (auto i : batch) {
        const auto& p = data[i];
        const auto h_en = model::encode(p.english, model.encoder, &rng);
        en.push_back(objectives::qa_loss(model::qa_forward(h_en, model.head),
                                         p.english.answer->begin, p.english.answer->end));
        const auto h_l = model::encode(p.translated, model.encoder, &rng);
        tr.push_back(objectives::qa_loss(model::qa_forward(h_l, model.head),
                                         p.translated.answer->begin,
                                         p.translated.answer->end));
        all.push_back(en.back());
        all.push_back(tr.back());
      }
      const auto loss = objectives::mean_loss(all);
      checked(loss, step);
      rec.emit(step, "qa_en", objectives::mean_loss(en).item());
      rec.emit(step, "qa_l", objectives::mean_loss(tr).item());
      tape.backward(loss.value);
      adam_step(params, state.qa, config.learning_rate);
      ++result.optimizer_steps;
    }
    rec.phase("qa");

    // (2): PSA step supervised by the English argmax span.
    if (config.lambda_psa > 0.0) {
      std::vector<model::Span> targets;
      {
        ad::NoGradScope no_grad;
        for (auto i : batch) {
          const auto& p = data[i];
          const auto pred = model::qa_forward(model::encode(p.english, model.encoder), model.head);
          const auto best = model::extract_answer(pred, p.english, config.max_answer_len);
          targets.push_back(remap(best, p.english, p.translated));
        }
      }
      auto rng = phase_rng(config, step, kPhasePsa);
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      std::vector<LossValue> psa;
      for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto& p = data[batch[r]];
        const auto h_l = model::encode(p.translated, model.encoder, &rng);
        psa.push_back(objectives::psa_loss(model::qa_forward(h_l, model.head), targets[r].begin,
                                           targets[r].end));
      }
      const auto loss = objectives::mean_loss(psa);
      rec.emit(step, "psa", checked(loss, step));
      tape.backward(ad::scale(loss.value, config.lambda_psa));
      adam_step(params, state.qa, config.learning_rate);
      ++result.optimizer_steps;
      rec.phase("psa");
    }

    // (3): QS step on average-pooled question representations.
    if (variant == LafVariant::psa_qs && config.lambda_qs > 0.0) {
      auto rng = phase_rng(config, step, kPhaseQs);
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      std::vector<LossValue> qs;
      for (auto i : batch) {
        const auto& p = data[i];
        const auto r_en = model::question_repr(model::encode(p.english, model.encoder, &rng),
                                               p.english, model::ReprMode::avg);
        const auto r_l = model::question_repr(model::encode(p.translated, model.encoder, &rng),
                                              p.translated, model::ReprMode::avg);
        qs.push_back(objectives::qs_loss(r_en, r_l));
      }
      const auto loss = objectives::mean_loss(qs);
      const double value = checked(loss, step);
      rec.emit(step, "qs", value);
      rec.emit(step, "cosine", 1.0 - value);
      tape.backward(ad::scale(loss.value, config.lambda_qs));
      adam_step(params, state.qa, config.learning_rate);
      ++result.optimizer_steps;
      rec.phase("qs");
    }
    ++result.steps;
  }
  return result;
}

// ---- diagnostics ----------------------------------------------------------

std::vector<std::vector<double>> frozen_reprs(const QAModel& model,
                                              std::span<const Feature> data,
                                              model::ReprMode mode) {
  ad::NoGradScope no_grad;
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  for (const auto& f : data) {
    const auto r = model::question_repr(model::encode(f.packed, model.encoder), f.packed, mode);
    out.emplace_back(r.values().begin(), r.values().end());
  }
  return out;
}

ProbeResult probe_language(const QAModel& model, std::span<const Feature> train,
                           std::span<const Feature> test, std::size_t num_labels,
                           const TrainConfig& config) {
  config.validate();
  require_data(train.size(), "probe_language");
  const auto train_x = frozen_reprs(model, train, config.repr_mode);
  const auto test_x = frozen_reprs(model, test, config.repr_mode);
  const std::size_t d = model.encoder.config.hidden_dim;
  std::mt19937_64 init_rng(model::mix_seed(config.seed, 0x9B0BEULL));
  auto disc = Discriminator::init(d, num_labels, init_rng);
  const auto params = disc.params();
  AdamState opt;

  auto rows = [d](const std::vector<std::vector<double>>& x,
                  std::span<const std::size_t> idx) {
    std::vector<double> flat;
    flat.reserve(idx.size() * d);
    for (auto i : idx) flat.insert(flat.end(), x[i].begin(), x[i].end());
    return Tensor::from({idx.size(), d}, std::move(flat));
  };
  auto accuracy = [&](const std::vector<std::vector<double>>& x, std::span<const Feature> f) {
    if (f.empty()) return 0.0;
    ad::NoGradScope no_grad;
    std::vector<std::size_t> idx(f.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto probs = model::discriminate(rows(x, idx), disc);
    std::size_t correct = 0;
    const auto v = probs.values();
    for (std::size_t r = 0; r < f.size(); ++r) {
      if (argmax_row(v.subspan(r * num_labels, num_labels)) == f[r].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(f.size());
  };

  BatchPlan plan(train.size(), config);
  const std::size_t steps = total_steps(train.size(), config);
  for (std::size_t step = 0; step < steps; ++step) {
    const auto batch = plan.batch(step);
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const auto probs = model::discriminate(rows(train_x, batch), disc);
    std::vector<LossValue> losses;
    for (std::size_t r = 0; r < batch.size(); ++r) {
      losses.push_back(
          objectives::discriminator_loss(ad::slice_rows(probs, r, r + 1), train[batch[r]].label));
    }
    const auto loss = objectives::mean_loss(losses);
    checked(loss, step);
    tape.backward(loss.value);
    adam_step(params, opt, config.learning_rate);
  }
  return {accuracy(train_x, train), accuracy(test_x, test)};
}

double mean_question_cosine(const QAModel& model, std::span<const PairFeature> pairs) {
  if (pairs.empty()) throw DataError("mean_question_cosine: no pairs");
  ad::NoGradScope no_grad;
  double total = 0.0;
  for (const auto& p : pairs) {
    const auto a = model::question_repr(model::encode(p.english, model.encoder), p.english,
                                        model::ReprMode::avg);
    const auto b = model::question_repr(model::encode(p.translated, model.encoder),
                                        p.translated, model::ReprMode::avg);
    total += ad::cosine_similarity(a, b).item();
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace xlqa::trainer
