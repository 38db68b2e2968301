#pragma once

// The training regimes (supervised, adversarial, language arbitration), the
// Adam optimizer, and the feature preparation they share.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xlqa/corpus.hpp"
#include "xlqa/model.hpp"

namespace xlqa::trainer {

using model::Discriminator;
using model::PackedInput;
using model::ParamSet;
using model::QAModel;

enum class Method {
  zs,
  tq,
  tc,
  tqc,
  tall,
  at_single,
  at_all,
  laf_psa_single,
  laf_psa_all,
  laf_psaqs_single,
  laf_psaqs_all,
};

enum class Regime { supervised, adversarial, laf_psa, laf_psaqs };

struct MethodSpec {
  Method method = Method::zs;
  // Target language of the *_single variants.
  std::string language;

  Regime regime() const;
  bool single() const;
  bool operator==(const MethodSpec&) const = default;
};

// Accepts names such as "ZS", "TQ", "AT_all", "AT_single(l2)",
// "LAF_PSAQS_single(l3)". Throws ConfigError otherwise.
MethodSpec parse_method(const std::string& name);
std::string to_string(const MethodSpec& spec);

struct TrainConfig {
  MethodSpec method;
  double learning_rate = 1e-3;
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  model::ReprMode repr_mode = model::ReprMode::cls;
  double lambda_adv = 1.0;
  double lambda_psa = 1.0;
  double lambda_qs = 1.0;
  model::PackingConfig packing;
  std::size_t max_answer_len = 8;

  // Throws ConfigError on any violated invariant.
  void validate() const;
  // Desk defaults for a method: ZS runs 3 epochs; AT uses cls, LAF avg.
  static TrainConfig defaults_for(const MethodSpec& method);
};

// ---- optimizer ------------------------------------------------------------

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros_like(const ParamSet& params);
  bool initialized() const { return !m.empty(); }
  bool operator==(const AdamState&) const = default;
};

// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps). Lazily sizes an empty
// state; throws ShapeError when grads or buffers do not match the params.
void adam_step(const ParamSet& params, std::span<const std::vector<double>> grads,
               AdamState& state, double learning_rate);
// Uses the accumulated gradients of the params, then clears them.
void adam_step(const ParamSet& params, AdamState& state, double learning_rate);

// ---- features -------------------------------------------------------------

// One packed training window that contains the gold answer.
struct Feature {
  std::string id;
  PackedInput packed;
  std::size_t label = 0;  // language label (index of q_lang)
};

// English and translated question packed against the same context windows.
struct PairFeature {
  std::string id;  // translated example id
  PackedInput english;
  PackedInput translated;
};

// Windows without the answer are dropped. When `languages` is given, each
// feature is labelled with the index of its question language there
// (DataError when missing).
std::vector<Feature> make_features(std::span<const corpus::RawExample> examples,
                                   const corpus::Vocabulary& vocab,
                                   const model::PackingConfig& packing,
                                   std::span<const std::string> languages = {});

// Joins every translated-question row to its English source by id. Only rows
// whose question language is in `languages` are paired (all when empty).
// Throws DataError naming the id of an unpaired row.
std::vector<PairFeature> make_pairs(std::span<const corpus::RawExample> examples,
                                    const corpus::Vocabulary& vocab,
                                    const model::PackingConfig& packing,
                                    std::span<const std::string> languages = {});

// Languages a method trains on: {en} plus the single language or all of them.
std::vector<std::string> method_languages(const MethodSpec& method,
                                          std::span<const std::string> available);

// ---- training -------------------------------------------------------------

struct TraceRow {
  std::size_t step = 0;
  std::string name;
  double value = 0.0;
};

struct TrainState {
  AdamState qa;
  AdamState disc;
  std::uint64_t step = 0;  // batches completed
  bool operator==(const TrainState&) const = default;
};

struct TrainHooks {
  std::function<void(const TraceRow&)> on_trace;
  // Called after each phase of a step with its name.
  std::function<void(std::string_view phase)> after_phase;
  // Stop after this many batches in this call (0 = run to the end).
  std::size_t max_steps = 0;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  std::size_t steps = 0;
  std::size_t optimizer_steps = 0;
};

std::size_t steps_per_epoch(std::size_t num_items, std::size_t batch_size);
std::size_t total_steps(std::size_t num_items, const TrainConfig& config);

// Indices of the items in batch `step`: seeded shuffle per epoch.
std::vector<std::size_t> batch_indices(std::size_t num_items, const TrainConfig& config,
                                       std::size_t step);

TrainResult train_supervised(QAModel& model, std::span<const Feature> data,
                             const TrainConfig& config, TrainState& state,
                             const TrainHooks& hooks = {});

// Alternating updates: QA step against a frozen discriminator, recompute of
// the representations under the updated encoder, then a discriminator step.
TrainResult train_adversarial(QAModel& model, Discriminator& disc,
                              std::span<const Feature> data, const TrainConfig& config,
                              TrainState& state, const TrainHooks& hooks = {});

enum class LafVariant { psa, psa_qs };

// Up to three separate QA-parameter steps per batch: joint QA, PSA, and QS.
TrainResult train_laf(QAModel& model, std::span<const PairFeature> data,
                      const TrainConfig& config, LafVariant variant, TrainState& state,
                      const TrainHooks& hooks = {});

// ---- diagnostics ----------------------------------------------------------

// Frozen question representations (no dropout), one row per feature.
std::vector<std::vector<double>> frozen_reprs(const QAModel& model,
                                              std::span<const Feature> data,
                                              model::ReprMode mode);

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Trains a fresh discriminator on frozen representations of `train` the same
// way the adversarial regime trains its own, then scores it on `test`.
ProbeResult probe_language(const QAModel& model, std::span<const Feature> train,
                           std::span<const Feature> test, std::size_t num_labels,
                           const TrainConfig& config);

// Mean cosine similarity of paired average-pooled question representations.
double mean_question_cosine(const QAModel& model, std::span<const PairFeature> pairs);

}  // namespace xlqa::trainer
