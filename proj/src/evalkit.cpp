#include "xlqa/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <thread>
#include <unordered_map>

#include "xlqa/errors.hpp"

namespace xlqa::evalkit {

// ---- token F1 ---------------------------------------------------------------

double token_f1(const Tokens& prediction, const Tokens& gold) {
  if (prediction.empty() || gold.empty()) return 0.0;
  std::unordered_map<std::string, long> counts;
  for (const auto& t : gold) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : prediction) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(prediction.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

double token_f1(const Tokens& prediction, std::span<const Tokens> golds) {
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, token_f1(prediction, g));
  return best;
}

// ---- aggregation ----------------------------------------------------------

Aggregate aggregate(const Matrix& matrix) {
  Aggregate a;
  double diag = 0.0, all = 0.0;
  for (const auto& [q, row] : matrix) {
    for (const auto& [c, v] : row) {
      all += v;
      ++a.cells;
      if (q == c) {
        diag += v;
        ++a.diagonal_cells;
      }
    }
  }
  if (a.cells) a.gxlt = all / static_cast<double>(a.cells);
  if (a.diagonal_cells) a.xlt = diag / static_cast<double>(a.diagonal_cells);
  return a;
}

EvalReport summarize(std::vector<ExampleScore> scores) {
  std::sort(scores.begin(), scores.end(),
            [](const ExampleScore& x, const ExampleScore& y) { return x.id < y.id; });
  EvalReport r;
  Matrix sums;
  for (const auto& s : scores) {
    sums[s.q_lang][s.c_lang] += s.f1;
    ++r.counts[s.q_lang][s.c_lang];
  }
  for (const auto& [q, row] : sums) {
    for (const auto& [c, total] : row) {
      r.matrix[q][c] = total / static_cast<double>(r.counts[q][c]);
    }
  }
  const auto agg = aggregate(r.matrix);
  r.xlt = agg.xlt;
  r.gxlt = agg.gxlt;
  r.examples = std::move(scores);
  return r;
}

// ---- prediction -----------------------------------------------------------

Tokens predict(const model::QAModel& model, const corpus::RawExample& example,
               const corpus::Vocabulary& vocab, const EvalOptions& options) {
  ad::NoGradScope no_grad;
  const auto q = vocab.encode(example.question);
  const auto c = vocab.encode(example.context);
  bool found = false;
  double best_score = 0.0;
  std::size_t best_b = 0, best_e = 0;
  for (const auto& packed : model::pack_input(q, c, std::nullopt, options.packing)) {
    const auto pred = model::qa_forward(model::encode(packed, model.encoder), model.head);
    const auto span = model::extract_answer(pred, packed, options.max_answer_len);
    if (!found || span.score > best_score) {
      found = true;
      best_score = span.score;
      best_b = packed.to_context(span.begin);
      best_e = packed.to_context(span.end);
    }
  }
  if (!found) return {};
  return Tokens(example.context.begin() + static_cast<std::ptrdiff_t>(best_b),
                example.context.begin() + static_cast<std::ptrdiff_t>(best_e) + 1);
}

EvalReport evaluate(const model::QAModel& model, std::span<const corpus::RawExample> examples,
                    const corpus::Vocabulary& vocab, const EvalOptions& options) {
  std::vector<ExampleScore> scores(examples.size());
  auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ex = examples[i];
      auto pred = predict(model, ex, vocab, options);
      const double f1 = token_f1(pred, ex.answer.text);
      scores[i] = {ex.id, ex.q_lang, ex.c_lang, std::move(pred), f1};
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, 256);
  if (workers == 1 || examples.size() < 2 * workers) {
    score_range(0, examples.size());
  } else {
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (examples.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(examples.size(), w * chunk);
      const std::size_t end = std::min(examples.size(), begin + chunk);
      threads.emplace_back([&, w, begin, end] {
        try {
          score_range(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return summarize(std::move(scores));
}

// ---- serialization --------------------------------------------------------

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["matrix"] = report.matrix;
  j["counts"] = report.counts;
  j["xlt"] = report.xlt;
  j["gxlt"] = report.gxlt;
  return j;
}

void write_predictions(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write predictions " + path.string());
  for (const auto& s : report.examples) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["q_lang"] = s.q_lang;
    j["c_lang"] = s.c_lang;
    j["prediction"] = s.prediction;
    j["f1"] = s.f1;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing predictions " + path.string());
}

std::vector<ExampleScore> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions " + path.string());
  std::vector<ExampleScore> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("q_lang").get<std::string>(),
                     j.at("c_lang").get<std::string>(), j.at("prediction").get<Tokens>(),
                     j.at("f1").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---- significance ---------------------------------------------------------

SignificanceResult fisher_test(std::span<const double> scores_a,
                               std::span<const double> scores_b, std::size_t permutations,
                               std::uint64_t seed) {
  if (scores_a.size() != scores_b.size()) {
    throw DataError("fisher_test: " + std::to_string(scores_a.size()) + " vs " +
                    std::to_string(scores_b.size()) + " paired scores");
  }
  if (permutations < 1000) throw ConfigError("fisher_test: permutations must be >= 1000");
  const std::size_t n = scores_a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = scores_a[i] - scores_b[i];

  SignificanceResult r;
  r.seed = seed;
  if (n == 0) {
    r.permutations = permutations;
    return r;
  }
  double total = 0.0;
  for (double d : diff) total += d;
  r.observed = total / static_cast<double>(n);
  // Guards against rounding noise when a permuted sum ties the observed one.
  const double threshold = std::abs(total) - 1e-9 * (1.0 + std::abs(total));

  std::size_t hits = 0;
  if (n < 63 && (std::uint64_t{1} << n) <= permutations) {
    r.exhaustive = true;
    r.permutations = static_cast<std::size_t>(std::uint64_t{1} << n);
    for (std::uint64_t mask = 0; mask < r.permutations; ++mask) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (mask >> i & 1u) ? -diff[i] : diff[i];
      if (std::abs(s) >= threshold) ++hits;
    }
  } else {
    r.permutations = permutations;
    std::mt19937_64 rng(seed);
    for (std::size_t p = 0; p < permutations; ++p) {
      double s = 0.0;
      std::uint64_t bits = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i % 64 == 0) bits = rng();
        s += (bits >> (i % 64) & 1u) ? -diff[i] : diff[i];
      }
      if (std::abs(s) >= threshold) ++hits;
    }
  }
  r.p_value = static_cast<double>(1 + hits) / static_cast<double>(1 + r.permutations);
  r.p_value = std::min(1.0, r.p_value);
  return r;
}

nlohmann::ordered_json significance_to_json(const SignificanceResult& r) {
  nlohmann::ordered_json j;
  j["observed"] = r.observed;
  j["p_value"] = r.p_value;
  j["permutations"] = r.permutations;
  j["seed"] = r.seed;
  j["exhaustive"] = r.exhaustive;
  return j;
}

// ---- error analysis -------------------------------------------------------

std::pair<std::vector<double>, std::vector<double>> paired_scores(
    std::span<const ExampleScore> a, std::span<const ExampleScore> b) {
  std::vector<const ExampleScore*> sa, sb;
  for (const auto& s : a) sa.push_back(&s);
  for (const auto& s : b) sb.push_back(&s);
  auto by_id = [](const ExampleScore* x, const ExampleScore* y) { return x->id < y->id; };
  std::sort(sa.begin(), sa.end(), by_id);
  std::sort(sb.begin(), sb.end(), by_id);
  const std::size_t n = std::min(sa.size(), sb.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (sa[i]->id != sb[i]->id) {
      throw DataError("prediction ids diverge at '" + std::min(sa[i]->id, sb[i]->id) + "'");
    }
  }
  if (sa.size() != sb.size()) {
    const auto& longer = sa.size() > sb.size() ? sa : sb;
    throw DataError("prediction ids diverge at '" + longer[n]->id + "'");
  }
  std::pair<std::vector<double>, std::vector<double>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.first.push_back(sa[i]->f1);
    out.second.push_back(sb[i]->f1);
  }
  return out;
}

std::vector<ErrorCase> error_analysis(std::span<const ExampleScore> a,
                                      std::span<const ExampleScore> b,
                                      std::span<const corpus::RawExample> examples,
                                      std::size_t k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("error_analysis: k must be >= 1");
  paired_scores(a, b);
  std::map<std::string, const ExampleScore*> b_by_id;
  for (const auto& s : b) b_by_id[s.id] = &s;
  std::map<std::string, const corpus::RawExample*> ex_by_id;
  for (const auto& ex : examples) ex_by_id[ex.id] = &ex;

  std::vector<ErrorCase> wins;
  std::vector<const ExampleScore*> sorted_a;
  for (const auto& s : a) sorted_a.push_back(&s);
  std::sort(sorted_a.begin(), sorted_a.end(),
            [](const ExampleScore* x, const ExampleScore* y) { return x->id < y->id; });
  for (const auto* sa : sorted_a) {
    const auto* sb = b_by_id.at(sa->id);
    if (!(sb->f1 > sa->f1)) continue;
    ErrorCase c;
    c.id = sa->id;
    if (auto it = ex_by_id.find(sa->id); it != ex_by_id.end()) {
      c.question = it->second->question;
      c.context = it->second->context;
      c.gold = it->second->answer.text;
    }
    c.prediction_a = sa->prediction;
    c.prediction_b = sb->prediction;
    c.f1_a = sa->f1;
    c.f1_b = sb->f1;
    wins.push_back(std::move(c));
  }
  if (wins.size() <= k) return wins;
  std::mt19937_64 rng(seed);
  std::shuffle(wins.begin(), wins.end(), rng);
  wins.resize(k);
  std::sort(wins.begin(), wins.end(),
            [](const ErrorCase& x, const ErrorCase& y) { return x.id < y.id; });
  return wins;
}

std::vector<ErrorCase> error_analysis(const model::QAModel& model_a,
                                      const model::QAModel& model_b,
                                      std::span<const corpus::RawExample> examples,
                                      const corpus::Vocabulary& vocab,
                                      const EvalOptions& options, std::size_t k,
                                      std::uint64_t seed) {
  const auto ra = evaluate(model_a, examples, vocab, options);
  const auto rb = evaluate(model_b, examples, vocab, options);
  return error_analysis(ra.examples, rb.examples, examples, k, seed);
}

nlohmann::ordered_json error_case_to_json(const ErrorCase& c) {
  nlohmann::ordered_json j;
  j["id"] = c.id;
  j["question"] = c.question;
  j["context"] = c.context;
  j["gold"] = c.gold;
  j["prediction_a"] = c.prediction_a;
  j["prediction_b"] = c.prediction_b;
  j["f1_a"] = c.f1_a;
  j["f1_b"] = c.f1_b;
  return j;
}

}  // namespace xlqa::evalkit
