#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <random>

#include "support/fixtures.hpp"
#include "xlqa/augment.hpp"
#include "xlqa/errors.hpp"
#include "xlqa/evalkit.hpp"

using namespace xlqa;
using corpus::Tokens;
using evalkit::ExampleScore;

using testing::all_lists;
using testing::oracle_f1;
using testing::published_matrix;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "xlqa_test_evalkit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

ExampleScore score(std::string id, double f1, Tokens pred = {"x"}) {
  return {std::move(id), "en", "en", std::move(pred), f1};
}

}  // namespace

TEST_CASE("token_f1 examples") {
  CHECK(evalkit::token_f1(Tokens{"a", "b"}, Tokens{"a", "b"}) == 1.0);
  CHECK(evalkit::token_f1(Tokens{"a"}, Tokens{"b"}) == 0.0);
  CHECK(evalkit::token_f1(Tokens{"a", "b"}, Tokens{"b", "c"}) == doctest::Approx(0.5));
  const std::vector<Tokens> golds{{"z"}, {"a", "b"}};
  CHECK(evalkit::token_f1(Tokens{"a", "b"}, golds) == 1.0);
  CHECK(evalkit::token_f1(Tokens{}, Tokens{"a"}) == 0.0);
}

TEST_CASE("token_f1 equals the exhaustive multiset oracle") {
  const auto lists = all_lists({"a", "b", "c"}, 5);
  CHECK(lists.size() == 364);
  std::size_t mismatches = 0;
  for (const auto& p : lists)
    for (const auto& g : lists) {
      const double f = evalkit::token_f1(p, g);
      if (std::abs(f - oracle_f1(p, g)) > 1e-12) ++mismatches;
      if (std::abs(f - evalkit::token_f1(g, p)) > 1e-12) ++mismatches;
    }
  CHECK(mismatches == 0);
}

TEST_CASE("aggregate reproduces the published 7x7 fixture") {
  const auto a = evalkit::aggregate(published_matrix());
  CHECK(a.cells == 49);
  CHECK(a.diagonal_cells == 7);
  CHECK(std::abs(a.xlt - 65.7) <= 0.05);
  CHECK(std::abs(a.gxlt - 61.9) <= 0.05);
  // The printed averages row agrees with the column means.
  const auto m = published_matrix();
  double de = 0;
  for (const auto& [q, row] : m) de += row.at("de");
  CHECK(std::abs(de / 7 - 61.5) <= 0.05);
}

TEST_CASE("aggregate small cases") {
  evalkit::Matrix one{{"en", {{"en", 1.0}}}};
  const auto a = evalkit::aggregate(one);
  CHECK(a.xlt == 1.0);
  CHECK(a.gxlt == 1.0);
  evalkit::Matrix two{{"en", {{"en", 0.4}, {"l1", 0.8}}}};
  const auto b = evalkit::aggregate(two);
  CHECK(b.gxlt == doctest::Approx(0.6));
  CHECK(b.xlt == doctest::Approx(0.4));
}

TEST_CASE("summarize builds the matrix from example scores") {
  std::vector<ExampleScore> s{{"b", "en", "en", {"x"}, 1.0},
                              {"a", "en", "en", {"y"}, 0.5},
                              {"c", "en", "l1", {"z"}, 0.25}};
  const auto r = evalkit::summarize(s);
  CHECK(r.matrix.at("en").at("en") == doctest::Approx(0.75));
  CHECK(r.counts.at("en").at("l1") == 1);
  CHECK(r.xlt == doctest::Approx(0.75));
  CHECK(r.gxlt == doctest::Approx(0.5));
  CHECK(r.examples.front().id == "a");
  const auto j = evalkit::report_to_json(r);
  CHECK(j["xlt"].get<double>() == doctest::Approx(evalkit::aggregate(r.matrix).xlt));
}

TEST_CASE("predictions round trip") {
  std::vector<ExampleScore> s{{"a#en-en", "en", "en", {"x", "y"}, 1.0},
                              {"b#l1-l1", "l1", "l1", {}, 0.0}};
  const auto r = evalkit::summarize(s);
  const auto path = temp_file("pred.jsonl");
  evalkit::write_predictions(r, path);
  const auto back = evalkit::read_predictions(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a#en-en");
  CHECK(back[0].prediction == Tokens{"x", "y"});
  CHECK(back[1].q_lang == "l1");
  CHECK(back[1].f1 == 0.0);
  CHECK_THROWS_AS(evalkit::read_predictions(temp_file("none.jsonl")), IoError);
}

TEST_CASE("fisher_test examples") {
  std::vector<double> a{0.1, 0.5, 0.9, 0.3};
  const auto same = evalkit::fisher_test(a, a, 10000, 1);
  CHECK(same.p_value == 1.0);

  const std::vector<double> ones{1, 1, 1, 1}, zeros{0, 0, 0, 0};
  const auto four = evalkit::fisher_test(ones, zeros, 1000, 1);
  CHECK(four.exhaustive);
  CHECK(four.p_value == doctest::Approx(3.0 / 17.0).epsilon(1e-12));
  CHECK(four.observed == doctest::Approx(1.0));

  std::mt19937_64 rng(99);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> sa(200), sb(200);
  for (std::size_t i = 0; i < 200; ++i) {
    sb[i] = u(rng);
    sa[i] = sb[i] + 0.1 + noise(rng);
  }
  const auto shifted = evalkit::fisher_test(sa, sb, 10000, 3);
  CHECK(shifted.p_value < 0.05);
  CHECK_FALSE(shifted.exhaustive);
  CHECK(shifted.permutations == 10000);
  const auto again = evalkit::fisher_test(sa, sb, 10000, 3);
  CHECK(again.p_value == shifted.p_value);

  CHECK_THROWS_AS(evalkit::fisher_test(sa, sb, 999, 3), ConfigError);
  CHECK_THROWS_AS(evalkit::fisher_test(sa, std::span<const double>(sb).first(10), 1000, 3),
                  DataError);
  const auto j = evalkit::significance_to_json(shifted);
  CHECK(j["permutations"] == 10000);
  CHECK(j["seed"] == 3);
}

TEST_CASE("fisher_test under the null rarely rejects") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.1);
  int above = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> a(100), b(100);
    for (std::size_t i = 0; i < 100; ++i) {
      b[i] = 0.5;
      a[i] = 0.5 + noise(rng);
    }
    if (evalkit::fisher_test(a, b, 1000, static_cast<std::uint64_t>(rep)).p_value > 0.05) ++above;
  }
  CHECK(above >= 90);
}

TEST_CASE("error analysis from scores") {
  std::vector<corpus::RawExample> ex(5);
  std::vector<ExampleScore> a, b;
  for (int i = 0; i < 5; ++i) {
    ex[i].id = "e" + std::to_string(i);
    ex[i].question = {"what", "?"};
    ex[i].context = {"x", "y"};
    ex[i].answer = {0, 0, {"x"}};
    a.push_back(score(ex[i].id, 0.2 * i));
    b.push_back(score(ex[i].id, i % 2 ? 1.0 : 0.0));
  }
  CHECK(evalkit::error_analysis(a, a, ex, 10, 1).empty());
  const auto all = evalkit::error_analysis(a, b, ex, 10, 1);
  CHECK(all.size() == 2);  // e1 and e3 improve
  for (const auto& c : all) CHECK(c.f1_b > c.f1_a);
  const auto one = evalkit::error_analysis(a, b, ex, 1, 1);
  CHECK(one.size() == 1);
  CHECK(evalkit::error_analysis(a, b, ex, 1, 1)[0].id == one[0].id);
  const auto j = evalkit::error_case_to_json(all[0]);
  CHECK(j.contains("gold"));
  CHECK(j.contains("f1_b"));

  auto shifted = b;
  shifted[2].id = "zzz";
  CHECK_THROWS_AS(evalkit::paired_scores(a, shifted), DataError);
  const auto [pa, pb] = evalkit::paired_scores(a, b);
  CHECK(pa.size() == 5);
  CHECK(pb[1] == 1.0);
}

TEST_CASE("evaluate is order invariant and worker invariant") {
  const auto world = corpus::generate_world(2, 2, 512);
  const auto base = corpus::generate_examples(world, 12, 4);
  augment::SyntheticTranslator tr(world);
  const std::vector<augment::Cell> cells{{"en", "en"}, {"l1", "l2"}, {"l2", "l2"}};
  auto set = augment::build_eval_set(base, world, tr, cells, 1).examples;
  model::EncoderConfig cfg;
  cfg.vocab_size = world.vocab.size();
  cfg.seed = 3;
  const auto m = model::QAModel::init(cfg);
  const evalkit::EvalOptions opt;
  const auto r1 = evalkit::evaluate(m, set, world.vocab, opt);
  std::reverse(set.begin(), set.end());
  auto opt4 = opt;
  opt4.workers = 4;
  const auto r2 = evalkit::evaluate(m, set, world.vocab, opt4);
  CHECK(r1.matrix == r2.matrix);
  CHECK(r1.xlt == r2.xlt);
  REQUIRE(r1.examples.size() == r2.examples.size());
  for (std::size_t i = 0; i < r1.examples.size(); ++i) {
    CHECK(r1.examples[i].id == r2.examples[i].id);
    CHECK(r1.examples[i].prediction == r2.examples[i].prediction);
  }
  CHECK(r1.matrix.size() == 3);
  CHECK(r1.counts.at("l1").at("l2") == base.size());
  // xlt is the diagonal mean of the report's own matrix.
  CHECK(r1.xlt == doctest::Approx(evalkit::aggregate(r1.matrix).xlt));
  for (const auto& s : r1.examples) {
    CHECK(s.prediction.size() >= 1);
    CHECK(s.prediction.size() <= opt.max_answer_len);
  }
}
