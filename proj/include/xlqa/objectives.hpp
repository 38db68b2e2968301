#pragma once

// Training objectives over model outputs. Every loss is a scalar tensor on the
// active record (when one exists) tagged with its role.

#include <cstddef>
#include <string>

#include "xlqa/autodiff.hpp"
#include "xlqa/model.hpp"

namespace xlqa::objectives {

using ad::Tensor;

enum class LossTag { qa, discriminator, adversarial, psa, qs };

std::string to_string(LossTag tag);

struct LossValue {
  Tensor value;
  LossTag tag;

  double item() const { return value.item(); }
};

// -1/2 (log alpha_b[b] + log alpha_e[e])
LossValue qa_loss(const model::SpanPrediction& pred, std::size_t begin, std::size_t end);

// -log p[gold]; p is 1 x |L|.
LossValue discriminator_loss(const Tensor& probs, std::size_t gold);

// KL(uniform || p) over the |L| labels.
LossValue adversarial_loss(const Tensor& probs);

// Same form as qa_loss, supervised by the English argmax span. The pseudo
// labels are plain indices, so nothing flows back into the English pass.
LossValue psa_loss(const model::SpanPrediction& pred_translated, std::size_t begin_en,
                   std::size_t end_en);

// 1 - cos(h_en, h_l). Throws NumericError on a zero-norm input.
LossValue qs_loss(const Tensor& repr_en, const Tensor& repr_translated);

// Mean of several losses sharing one tag.
LossValue mean_loss(std::span<const LossValue> losses);

}  // namespace xlqa::objectives
