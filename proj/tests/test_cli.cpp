#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "xlqa/cli.hpp"
#include "xlqa/corpus.hpp"
#include "xlqa/errors.hpp"

using namespace xlqa;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "xlqa_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// A tiny world and model so end-to-end commands finish quickly.
std::vector<std::string> small(const fs::path& out) {
  return {"--out", out.string(),
          "--set", "world.num_languages=2",
          "--set", "world.vocab_size=512",
          "--set", "corpus.train_size=24",
          "--set", "corpus.eval_size=6",
          "--set", "model.hidden_dim=16",
          "--set", "model.ff_dim=32",
          "--set", "train.epochs=1",
          "--set", "train.batch_size=8",
          "--set", "compare.permutations=1000"};
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("config merging and overrides") {
  auto c = cli::default_config();
  cli::apply_override(c, "train.learning_rate=0.01");
  CHECK(c["train"]["learning_rate"] == 0.01);
  cli::apply_override(c, "train.method=TQ");
  CHECK(c["train"]["method"] == "TQ");
  CHECK_THROWS_AS(cli::apply_override(c, "train.nope=1"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "train.epochs=\"x\""), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "novalue"), ConfigError);

  const auto r = cli::resolve_config(cli::default_config());
  CHECK(r.num_languages == 5);
  CHECK(r.train_size == 2000);
  CHECK(r.encoder == model::EncoderConfig::desk());

  auto zero = cli::default_config();
  zero["world"]["num_languages"] = 0;
  CHECK_THROWS_AS(cli::resolve_config(zero), ConfigError);
}

TEST_CASE("resolve_cells") {
  const std::vector<std::string> langs{"en", "l1", "l2"};
  CHECK(cli::resolve_cells({"full"}, langs).size() == 9);
  CHECK(cli::resolve_cells({"diagonal"}, langs).size() == 3);
  CHECK(cli::resolve_cells({"diagonal", "en-l1", "l1-l1"}, langs).size() == 4);
  CHECK_THROWS_AS(cli::resolve_cells({"en-zz"}, langs), ConfigError);
  CHECK_THROWS_AS(cli::resolve_cells({"enl1"}, langs), ConfigError);
}

TEST_CASE("exit codes") {
  const auto dir = fresh_dir("codes");
  const auto zero = run({"gen", "--out", dir.string(), "--set", "world.num_languages=0"});
  CHECK(zero.code == 2);
  CHECK(run({"augment", "--out", dir.string(), "--strategy", "XYZ"}).code == 2);
  CHECK(run({"bogus"}).code == 2);
  CHECK(run({"gen", "--out", dir.string(), "--set", "nope=1"}).code == 2);
  CHECK(run({"train", "--out", dir.string(), "--lambda-adv", "-1"}).code == 2);

  const auto missing = run({"augment", "--out", dir.string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.find((dir / "world.json").string()) != std::string::npos);

  const auto eval = run({"eval", "--out", dir.string()});
  CHECK(eval.code == 1);
  CHECK(eval.err.find("checkpoint.bin") != std::string::npos);

  {
    std::ofstream bad(dir / "bad.json");
    bad << "{not json";
  }
  CHECK(run({"gen", "--config", (dir / "bad.json").string(), "--out", dir.string()}).code == 2);
  CHECK(run({"gen", "--config", (dir / "absent.json").string(), "--out", dir.string()}).code == 1);
}

TEST_CASE("gen is deterministic and follows the defaults") {
  const auto a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  REQUIRE(run({"gen", "--out", a.string()}).code == 0);
  REQUIRE(run({"gen", "--out", b.string()}).code == 0);
  for (const char* f : {"world.json", "train.jsonl", "eval.jsonl"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto manifest = read_json(a / "manifest.json");
  CHECK(manifest["command"] == "gen");
  CHECK(manifest["metrics"]["languages"].size() == 6);
  CHECK(manifest["metrics"]["train_examples"] == 2000);
  CHECK(manifest["metrics"]["eval_examples"] == 400);
  CHECK(corpus::read_jsonl(a / "train.jsonl").size() == 2000);

  const auto c = fresh_dir("gen_c");
  REQUIRE(run({"gen", "--out", c.string(), "--seed", "2"}).code == 0);
  CHECK(slurp(a / "train.jsonl") != slurp(c / "train.jsonl"));

  // TQ on the 2,000-example base with 5 languages gives 12,000 records.
  REQUIRE(run({"augment", "--out", a.string(), "--strategy", "TQ"}).code == 0);
  CHECK(corpus::read_jsonl(a / "aug-TQ.jsonl").size() == 12000);
  const auto stats = read_json(a / "aug-TQ.stats.json");
  CHECK(stats.contains("kept"));

  REQUIRE(run({"augment", "--out", a.string(), "--strategy", "TALL"}).code == 0);
  const auto tall = read_json(a / "manifest.json")["metrics"];
  CHECK(tall["identity"]["holds"] == true);
  CHECK(tall["records"] == 16 * 2000);

  REQUIRE(run({"stats", "--out", a.string(), "--input", (a / "train.jsonl").string()}).code == 0);
  CHECK(read_json(a / "stats.json")["total_pairs"] == 2000);
}

TEST_CASE("train, eval and compare end to end") {
  const auto dir = fresh_dir("e2e");
  const auto base = small(dir);
  REQUIRE(run(with({"gen"}, base)).code == 0);
  REQUIRE(run(with({"augment", "--strategy", "TQ"}, base)).code == 0);

  const auto trained = run(with({"train", "--method", "AT_all", "--lambda-adv", "0.25"}, base));
  REQUIRE(trained.code == 0);
  const auto manifest = read_json(dir / "manifest.json");
  CHECK(manifest["metrics"]["lambda_adv"] == 0.25);
  CHECK(manifest["config"]["train"]["lambda_adv"] == 0.25);
  CHECK(manifest["argv"].dump().find("0.25") != std::string::npos);
  CHECK(fs::exists(dir / "checkpoint.bin"));
  CHECK(slurp(dir / "trace.csv").rfind("step,loss,value\n", 0) == 0);

  REQUIRE(run(with({"eval", "--set", "eval.cells=[\"full\"]"}, base)).code == 0);
  const auto report = read_json(dir / "report.json");
  const auto& m = report["matrix"];
  REQUIRE(m.size() == 3);
  double diag = 0.0;
  for (const auto& [lang, row] : m.items()) diag += row.at(lang).get<double>();
  CHECK(report["xlt"].get<double>() == doctest::Approx(diag / 3.0).epsilon(1e-12));

  // Evaluating with four workers writes the same report.
  const auto single = slurp(dir / "predictions.jsonl");
  REQUIRE(run(with({"eval", "--workers", "4"}, base)).code == 0);
  CHECK(slurp(dir / "predictions.jsonl") == single);

  const auto preds = (dir / "predictions.jsonl").string();
  REQUIRE(run(with({"compare", "--a", preds, "--b", preds}, base)).code == 0);
  const auto cmp = read_json(dir / "compare.json");
  CHECK(cmp["p_value"] == 1.0);
  CHECK(cmp["permutations"] == 1000);
  CHECK(cmp.contains("seed"));
  CHECK(slurp(dir / "errors.jsonl").empty());

  // Mismatched prediction files name the first divergent id.
  {
    std::ifstream in(preds);
    std::ofstream out(dir / "short.jsonl");
    std::string line;
    std::getline(in, line);
    out << line << '\n';
  }
  const auto mismatch = run(with({"compare", "--a", preds, "--b", (dir / "short.jsonl").string()}, base));
  CHECK(mismatch.code == 1);
}

TEST_CASE("resumed training equals a straight run") {
  const auto straight = fresh_dir("straight"), resumed = fresh_dir("resumed");
  for (const auto& d : {straight, resumed}) {
    REQUIRE(run(with({"gen"}, small(d))).code == 0);
    REQUIRE(run(with({"augment", "--strategy", "TQ"}, small(d))).code == 0);
  }
  REQUIRE(run(with({"train", "--method", "AT_all"}, small(straight))).code == 0);
  REQUIRE(run(with({"train", "--method", "AT_all", "--max-steps", "3"}, small(resumed))).code == 0);
  REQUIRE(run(with({"train", "--method", "AT_all", "--resume"}, small(resumed))).code == 0);
  CHECK(slurp(straight / "checkpoint.bin") == slurp(resumed / "checkpoint.bin"));
  CHECK(slurp(straight / "trace.csv") == slurp(resumed / "trace.csv"));
}
