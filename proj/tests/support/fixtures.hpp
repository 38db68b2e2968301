#pragma once

// Fixtures shared by the unit and acceptance tests.

#include <algorithm>
#include <string>
#include <vector>

#include "xlqa/corpus.hpp"
#include "xlqa/evalkit.hpp"

namespace xlqa::testing {

using corpus::Tokens;

// Every token list of length <= max_len over the alphabet.
inline std::vector<Tokens> all_lists(const std::vector<std::string>& alphabet, std::size_t max_len) {
  std::vector<Tokens> out{{}};
  std::vector<Tokens> frontier{{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<Tokens> next;
    for (const auto& l : frontier)
      for (const auto& a : alphabet) {
        auto x = l;
        x.push_back(a);
        next.push_back(x);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

// Multiset overlap by repeated removal.
inline double oracle_f1(const Tokens& pred, const Tokens& gold) {
  Tokens rest = gold;
  double common = 0;
  for (const auto& t : pred) {
    const auto it = std::find(rest.begin(), rest.end(), t);
    if (it != rest.end()) {
      ++common;
      rest.erase(it);
    }
  }
  if (common == 0) return 0.0;
  const double p = common / static_cast<double>(pred.size());
  const double r = common / static_cast<double>(gold.size());
  return 2 * p * r / (p + r);
}

inline evalkit::Matrix published_matrix() {
  const std::vector<std::string> langs{"ar", "de", "en", "es", "hi", "vi", "zh"};
  const double v[7][7] = {{58.0, 59.7, 70.3, 62.7, 51.1, 61.6, 54.0},
                          {58.6, 65.5, 78.0, 71.0, 59.0, 66.2, 59.9},
                          {56.8, 64.9, 80.2, 69.6, 56.6, 66.6, 59.6},
                          {55.8, 66.0, 77.7, 70.2, 55.3, 64.5, 58.2},
                          {50.5, 57.1, 70.3, 61.5, 58.9, 60.7, 54.0},
                          {49.3, 56.7, 69.0, 61.4, 50.8, 64.0, 54.7},
                          {54.3, 60.9, 74.3, 66.0, 52.4, 66.3, 63.1}};
  evalkit::Matrix m;
  for (std::size_t q = 0; q < 7; ++q)
    for (std::size_t c = 0; c < 7; ++c) m[langs[q]][langs[c]] = v[q][c];
  return m;
}

}  // namespace xlqa::testing
