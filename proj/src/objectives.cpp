#include "xlqa/objectives.hpp"

#include <cmath>
#include <vector>

#include "xlqa/errors.hpp"

namespace xlqa::objectives {

std::string to_string(LossTag tag) {
  switch (tag) {
    case LossTag::qa: return "qa";
    case LossTag::discriminator: return "disc";
    case LossTag::adversarial: return "adv";
    case LossTag::psa: return "psa";
    case LossTag::qs: return "qs";
  }
  return "unknown";
}

namespace {

Tensor span_nll(const model::SpanPrediction& pred, std::size_t begin, std::size_t end) {
  const auto seq = pred.alpha_begin.size();
  if (begin >= seq || end >= seq) {
    throw IndexError("span loss: target (" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside sequence of length " +
                     std::to_string(seq));
  }
  Tensor lb = ad::log(ad::element(pred.alpha_begin, begin));
  Tensor le = ad::log(ad::element(pred.alpha_end, end));
  return ad::scale(ad::add(lb, le), -0.5);
}

}  // namespace

LossValue qa_loss(const model::SpanPrediction& pred, std::size_t begin, std::size_t end) {
  return {span_nll(pred, begin, end), LossTag::qa};
}

LossValue discriminator_loss(const Tensor& probs, std::size_t gold) {
  if (gold >= probs.size()) {
    throw IndexError("discriminator_loss: gold label " + std::to_string(gold) +
                     " outside " + std::to_string(probs.size()) + " labels");
  }
  return {ad::neg(ad::log(ad::element(probs, gold))), LossTag::discriminator};
}

LossValue adversarial_loss(const Tensor& probs) {
  const auto labels = static_cast<double>(probs.size());
  // sum_l (1/L) (log(1/L) - log p_l) = -log L - mean_l log p_l
  Tensor mean_log = ad::mean(ad::log(probs));
  return {ad::add_scalar(ad::neg(mean_log), -std::log(labels)), LossTag::adversarial};
}

LossValue psa_loss(const model::SpanPrediction& pred_translated, std::size_t begin_en,
                   std::size_t end_en) {
  return {span_nll(pred_translated, begin_en, end_en), LossTag::psa};
}

LossValue qs_loss(const Tensor& repr_en, const Tensor& repr_translated) {
  Tensor cosine = ad::cosine_similarity(repr_en, repr_translated);
  return {ad::add_scalar(ad::neg(cosine), 1.0), LossTag::qs};
}

LossValue mean_loss(std::span<const LossValue> losses) {
  if (losses.empty()) throw ShapeError("mean_loss: no losses");
  std::vector<Tensor> parts;
  parts.reserve(losses.size());
  for (const auto& l : losses) parts.push_back(l.value);
  Tensor stacked = ad::concat_rows(parts);
  return {ad::mean(stacked), losses.front().tag};
}

}  // namespace xlqa::objectives
