#pragma once

// Scoring and analysis: token F1, language-pair matrices with XLT/G-XLT
// aggregation, the paired randomization test, and error-analysis dumps.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "xlqa/corpus.hpp"
#include "xlqa/model.hpp"

namespace xlqa::evalkit {

using corpus::Tokens;

// Max over golds of the multiset-overlap F1. Empty golds score 0.
double token_f1(const Tokens& prediction, std::span<const Tokens> golds);
double token_f1(const Tokens& prediction, const Tokens& gold);

// q_lang -> c_lang -> value
using Matrix = std::map<std::string, std::map<std::string, double>>;

struct Aggregate {
  double xlt = 0.0;   // unweighted mean of the diagonal cells present
  double gxlt = 0.0;  // unweighted mean of all cells present
  std::size_t diagonal_cells = 0;
  std::size_t cells = 0;
};

Aggregate aggregate(const Matrix& matrix);

struct ExampleScore {
  std::string id;
  std::string q_lang;
  std::string c_lang;
  Tokens prediction;
  double f1 = 0.0;
};

struct EvalReport {
  Matrix matrix;  // F1 in [0, 1]
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  double xlt = 0.0;
  double gxlt = 0.0;
  std::vector<ExampleScore> examples;  // sorted by id
};

// Builds the matrix and aggregates from per-example scores.
EvalReport summarize(std::vector<ExampleScore> scores);

struct EvalOptions {
  model::PackingConfig packing;
  std::size_t max_answer_len = 8;
  std::size_t workers = 1;
};

// Highest-scoring span over every doc-stride window, as context tokens.
Tokens predict(const model::QAModel& model, const corpus::RawExample& example,
               const corpus::Vocabulary& vocab, const EvalOptions& options);

EvalReport evaluate(const model::QAModel& model, std::span<const corpus::RawExample> examples,
                    const corpus::Vocabulary& vocab, const EvalOptions& options);

// {matrix, counts, xlt, gxlt}
nlohmann::ordered_json report_to_json(const EvalReport& report);
void write_predictions(const EvalReport& report, const std::filesystem::path& path);
std::vector<ExampleScore> read_predictions(const std::filesystem::path& path);

struct SignificanceResult {
  double observed = 0.0;  // mean(a - b)
  double p_value = 1.0;
  std::size_t permutations = 0;
  std::uint64_t seed = 0;
  bool exhaustive = false;
};

// Paired sign-flip randomization test, two-sided, add-one smoothed. When
// 2^n <= permutations every sign pattern is enumerated once instead.
SignificanceResult fisher_test(std::span<const double> scores_a,
                               std::span<const double> scores_b, std::size_t permutations,
                               std::uint64_t seed);

nlohmann::ordered_json significance_to_json(const SignificanceResult& result);

struct ErrorCase {
  std::string id;
  Tokens question;
  Tokens context;
  Tokens gold;
  Tokens prediction_a;
  Tokens prediction_b;
  double f1_a = 0.0;
  double f1_b = 0.0;
};

// Up to k seeded-sample examples where system b beats system a. Throws
// DataError when the two score lists do not cover the same ids.
std::vector<ErrorCase> error_analysis(std::span<const ExampleScore> a,
                                      std::span<const ExampleScore> b,
                                      std::span<const corpus::RawExample> examples,
                                      std::size_t k, std::uint64_t seed);

// Same, scoring both models on `examples` first.
std::vector<ErrorCase> error_analysis(const model::QAModel& model_a,
                                      const model::QAModel& model_b,
                                      std::span<const corpus::RawExample> examples,
                                      const corpus::Vocabulary& vocab,
                                      const EvalOptions& options, std::size_t k,
                                      std::uint64_t seed);

nlohmann::ordered_json error_case_to_json(const ErrorCase& c);

// Pairs two prediction lists by id. Throws DataError naming the first id
// that differs.
std::pair<std::vector<double>, std::vector<double>> paired_scores(
    std::span<const ExampleScore> a, std::span<const ExampleScore> b);

}  // namespace xlqa::evalkit
