#pragma once

// Central finite-difference checking shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "xlqa/autodiff.hpp"
#include "xlqa/model.hpp"

namespace xlqa::testing {

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst_rel = 0.0;
  std::string worst_where;

  bool ok() const { return checked > 0 && failures == 0; }
};

struct GradCheckOptions {
  double eps = 1e-5;
  double rel_tol = 1e-4;
  double abs_floor = 1e-7;
  // Coordinates per tensor; 0 checks every coordinate.
  std::size_t max_per_tensor = 0;
  std::uint64_t seed = 0;
};

inline bool grad_close(double analytic, double numeric, const GradCheckOptions& opt,
                       double* rel_out = nullptr) {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const double rel = scale > 0 ? diff / scale : 0.0;
  if (rel_out) *rel_out = diff <= opt.abs_floor ? 0.0 : rel;
  return diff <= opt.abs_floor || rel < opt.rel_tol;
}

// `loss` builds a scalar from the current parameter values. It is called once
// on a recording tape for the analytic gradient and repeatedly without one for
// the numeric estimate.
inline GradCheckResult grad_check(const std::function<ad::Tensor()>& loss,
                                  std::span<const model::NamedParam> params,
                                  const GradCheckOptions& opt = {}) {
  for (const auto& p : params) p.tensor.impl()->grad.clear();
  {
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const auto value = loss();
    tape.backward(value);
  }
  GradCheckResult result;
  std::mt19937_64 rng(opt.seed);
  ad::NoGradScope no_grad;
  for (const auto& p : params) {
    const auto analytic = p.tensor.grad();
    ad::Tensor handle = p.tensor;  // shares storage
    auto values = handle.mutable_values();
    std::vector<std::size_t> coords(values.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opt.max_per_tensor > 0 && coords.size() > opt.max_per_tensor) {
      // Favour coordinates that actually received gradient.
      std::vector<std::size_t> live, dead;
      for (auto i : coords) (analytic[i] != 0.0 ? live : dead).push_back(i);
      std::shuffle(live.begin(), live.end(), rng);
      std::shuffle(dead.begin(), dead.end(), rng);
      coords.clear();
      const std::size_t want_dead = std::min<std::size_t>(dead.size(), opt.max_per_tensor / 8);
      for (std::size_t i = 0; i < live.size() && coords.size() + want_dead < opt.max_per_tensor; ++i)
        coords.push_back(live[i]);
      for (std::size_t i = 0; i < dead.size() && coords.size() < opt.max_per_tensor; ++i)
        coords.push_back(dead[i]);
    }
    for (auto i : coords) {
      const double saved = values[i];
      values[i] = saved + opt.eps;
      const double up = loss().item();
      values[i] = saved - opt.eps;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2 * opt.eps);
      double rel = 0.0;
      ++result.checked;
      if (!grad_close(analytic[i], numeric, opt, &rel)) ++result.failures;
      if (rel > result.worst_rel) {
        result.worst_rel = rel;
        result.worst_where = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

inline std::vector<model::NamedParam> named(std::initializer_list<ad::Tensor> tensors) {
  std::vector<model::NamedParam> out;
  std::size_t k = 0;
  for (const auto& t : tensors) out.push_back({"t" + std::to_string(k++), t});
  return out;
}

inline ad::Tensor random_param(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                               double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(ad::num_elements(shape));
  for (auto& x : v) x = dist(rng);
  return ad::Tensor::parameter(std::move(shape), std::move(v));
}

}  // namespace xlqa::testing
