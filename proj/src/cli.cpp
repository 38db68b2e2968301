#include "xlqa/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "xlqa/checkpoint.hpp"
#include "xlqa/corpus.hpp"
#include "xlqa/errors.hpp"
#include "xlqa/evalkit.hpp"

namespace xlqa::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- configuration ----------------------------------------------------------

json default_config() {
  return json{
      {"seed", 1},
      {"world", {{"num_languages", 5}, {"vocab_size", 2048}, {"tag_safety", 1.0}}},
      {"corpus", {{"train_size", 2000}, {"eval_size", 400}}},
      {"augment", {{"strategy", "TQ"}}},
      {"model",
       {{"num_layers", 2},
        {"num_heads", 2},
        {"hidden_dim", 64},
        {"ff_dim", 256},
        {"max_seq_len", 64},
        {"dropout_rate", 0.1}}},
      {"train",
       {{"method", "ZS"},
        {"learning_rate", 1e-3},
        {"epochs", 0},
        {"batch_size", 16},
        {"repr_mode", ""},
        {"lambda_adv", 1.0},
        {"lambda_psa", 1.0},
        {"lambda_qs", 1.0},
        {"doc_stride", 16},
        {"max_answer_len", 8}}},
      {"eval", {{"cells", json::array({"full"})}, {"workers", 1}}},
      {"compare", {{"permutations", 10000}, {"k", 20}}},
      {"pipeline",
       {{"strategies", json::array({"TQ", "TC", "TQC", "TALL"})},
        {"methods", json::array({"ZS", "TQ", "AT_all", "LAF_PSAQS_all"})}}},
  };
}

namespace {

bool same_kind(const json& def, const json& value) {
  if (def.is_number()) return value.is_number();
  if (def.is_array()) {
    return value.is_array() &&
           std::all_of(value.begin(), value.end(), [](const json& v) { return v.is_string(); });
  }
  return def.type() == value.type();
}

void merge_into(json& base, const json& overrides, const std::string& prefix) {
  if (!overrides.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : overrides.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      merge_into(slot, value, path);
    } else {
      if (!same_kind(slot, value)) {
        throw ConfigError("config key '" + path + "' expects " + std::string(slot.type_name()) +
                          ", got " + std::string(value.type_name()));
      }
      slot = value;
    }
  }
}

const json& at_path(const json& j, const std::string& path) {
  const json* node = &j;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    node = &node->at(path.substr(begin, dot - begin));
    if (dot == std::string::npos) return *node;
    begin = dot + 1;
  }
}

std::size_t get_count(const json& j, const std::string& path) {
  const auto& v = at_path(j, path);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ConfigError("config key '" + path + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double get_real(const json& j, const std::string& path) {
  const auto& v = at_path(j, path);
  if (!v.is_number()) throw ConfigError("config key '" + path + "' must be a number");
  return v.get<double>();
}

std::string get_string(const json& j, const std::string& path) {
  return at_path(j, path).get<std::string>();
}

std::vector<std::string> get_strings(const json& j, const std::string& path) {
  return at_path(j, path).get<std::vector<std::string>>();
}

}  // namespace

json merge_config(const json& base, const json& overrides) {
  json merged = base;
  merge_into(merged, overrides, "");
  return merged;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.rfind('.')) != std::string::npos; rest = rest.substr(0, pos)) {
    parts.push_back(rest.substr(pos + 1));
  }
  parts.push_back(rest);
  for (const auto& part : parts) patch = json{{part, patch}};
  config = merge_config(config, patch);
}

ExperimentConfig resolve_config(const json& merged) {
  const json j = merge_config(default_config(), merged);
  ExperimentConfig c;
  c.snapshot = j;
  if (!j.at("seed").is_number_integer() || j.at("seed").get<std::int64_t>() < 0) {
    throw ConfigError("seed must be a non-negative integer");
  }
  c.seed = j.at("seed").get<std::uint64_t>();
  c.num_languages = get_count(j, "world.num_languages");
  c.vocab_size = get_count(j, "world.vocab_size");
  c.tag_safety = get_real(j, "world.tag_safety");
  if (c.num_languages == 0) throw ConfigError("world.num_languages must be >= 1");
  if (!(c.tag_safety >= 0.0 && c.tag_safety <= 1.0)) {
    throw ConfigError("world.tag_safety must lie in [0, 1]");
  }
  if (c.vocab_size < 64 * (c.num_languages + 1)) {
    throw ConfigError("world.vocab_size " + std::to_string(c.vocab_size) + " too small for " +
                      std::to_string(c.num_languages) + " languages");
  }
  c.train_size = get_count(j, "corpus.train_size");
  c.eval_size = get_count(j, "corpus.eval_size");
  if (c.train_size == 0) throw ConfigError("corpus.train_size must be >= 1");
  c.strategy = augment::parse_strategy(get_string(j, "augment.strategy"));

  c.encoder.num_layers = get_count(j, "model.num_layers");
  c.encoder.num_heads = get_count(j, "model.num_heads");
  c.encoder.hidden_dim = get_count(j, "model.hidden_dim");
  c.encoder.ff_dim = get_count(j, "model.ff_dim");
  c.encoder.max_seq_len = get_count(j, "model.max_seq_len");
  c.encoder.dropout_rate = get_real(j, "model.dropout_rate");
  c.encoder.vocab_size = c.vocab_size;
  c.encoder.seed = c.seed;
  c.encoder.validate();

  c.train = train_config_for(c, trainer::parse_method(get_string(j, "train.method")));
  c.cells = get_strings(j, "eval.cells");
  if (c.cells.empty()) throw ConfigError("eval.cells must not be empty");
  c.workers = get_count(j, "eval.workers");
  if (c.workers == 0) throw ConfigError("eval.workers must be >= 1");
  c.permutations = get_count(j, "compare.permutations");
  if (c.permutations < 1000) throw ConfigError("compare.permutations must be >= 1000");
  c.error_k = get_count(j, "compare.k");
  if (c.error_k == 0) throw ConfigError("compare.k must be >= 1");
  c.pipeline_strategies = get_strings(j, "pipeline.strategies");
  for (const auto& s : c.pipeline_strategies) augment::parse_strategy(s);
  c.pipeline_methods = get_strings(j, "pipeline.methods");
  if (c.pipeline_methods.empty()) throw ConfigError("pipeline.methods must not be empty");
  for (const auto& m : c.pipeline_methods) train_config_for(c, trainer::parse_method(m));
  return c;
}

trainer::TrainConfig train_config_for(const ExperimentConfig& config,
                                      const trainer::MethodSpec& method) {
  const json& j = config.snapshot;
  auto t = trainer::TrainConfig::defaults_for(method);
  t.seed = config.seed;
  t.learning_rate = get_real(j, "train.learning_rate");
  if (const auto epochs = get_count(j, "train.epochs"); epochs > 0) t.epochs = epochs;
  t.batch_size = get_count(j, "train.batch_size");
  if (const auto mode = get_string(j, "train.repr_mode"); !mode.empty()) {
    t.repr_mode = model::parse_repr_mode(mode);
  }
  t.lambda_adv = get_real(j, "train.lambda_adv");
  t.lambda_psa = get_real(j, "train.lambda_psa");
  t.lambda_qs = get_real(j, "train.lambda_qs");
  t.packing = {config.encoder.max_seq_len, get_count(j, "train.doc_stride")};
  t.max_answer_len = get_count(j, "train.max_answer_len");
  t.validate();
  return t;
}

std::vector<augment::Cell> resolve_cells(const std::vector<std::string>& spec,
                                         const std::vector<std::string>& languages) {
  std::vector<augment::Cell> cells;
  std::set<augment::Cell> seen;
  auto add = [&](const std::string& q, const std::string& c) {
    if (seen.insert({q, c}).second) cells.emplace_back(q, c);
  };
  const std::set<std::string> known(languages.begin(), languages.end());
  for (const auto& s : spec) {
    if (s == "full") {
      for (const auto& q : languages) {
        for (const auto& c : languages) add(q, c);
      }
    } else if (s == "diagonal") {
      for (const auto& l : languages) add(l, l);
    } else {
      const auto dash = s.find('-');
      if (dash == std::string::npos) throw ConfigError("bad eval cell '" + s + "'");
      const auto q = s.substr(0, dash), c = s.substr(dash + 1);
      if (!known.count(q) || !known.count(c)) {
        throw ConfigError("eval cell '" + s + "' names an unknown language");
      }
      add(q, c);
    }
  }
  return cells;
}

// ---- helpers --------------------------------------------------------------

void write_json_atomic(const fs::path& path, const ordered_json& j) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out.flush()) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing input file " + path.string());
}

corpus::World load_world(const fs::path& data) {
  const auto path = data / "world.json";
  require_file(path);
  std::ifstream in(path);
  try {
    return corpus::world_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError("bad world file " + path.string() + ": " + e.what());
  }
}

std::vector<corpus::RawExample> load_examples(const fs::path& path) {
  require_file(path);
  return corpus::read_jsonl(path);
}

fs::path dataset_for(const trainer::MethodSpec& method, const fs::path& data) {
  switch (method.method) {
    case trainer::Method::zs: return data / "train.jsonl";
    case trainer::Method::tc: return data / "aug-TC.jsonl";
    case trainer::Method::tqc: return data / "aug-TQC.jsonl";
    case trainer::Method::tall: return data / "aug-TALL.jsonl";
    default: return data / "aug-TQ.jsonl";
  }
}

std::string dir_name(const trainer::MethodSpec& method) {
  std::string name = trainer::to_string(method);
  for (auto& ch : name) {
    if (ch == '(') ch = '-';
  }
  if (!name.empty() && name.back() == ')') name.pop_back();
  return name;
}

evalkit::EvalOptions eval_options(const ExperimentConfig& config) {
  return {config.train.packing, config.train.max_answer_len, config.workers};
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

// ---- commands -------------------------------------------------------------

json cmd_gen(const ExperimentConfig& config, const Paths& paths) {
  ensure_dir(paths.out);
  const auto world =
      corpus::generate_world(config.seed, config.num_languages, config.vocab_size, config.tag_safety);
  const auto train = corpus::generate_examples(world, config.train_size,
                                               model::mix_seed(config.seed, 11), "train");
  const auto eval = corpus::generate_examples(world, config.eval_size,
                                              model::mix_seed(config.seed, 12), "eval");
  write_json_atomic(paths.out / "world.json", corpus::world_to_json(world));
  corpus::write_jsonl(train, paths.out / "train.jsonl");
  corpus::write_jsonl(eval, paths.out / "eval.jsonl");
  return {{"artifacts",
           {{"world", (paths.out / "world.json").string()},
            {"train", (paths.out / "train.jsonl").string()},
            {"eval", (paths.out / "eval.jsonl").string()}}},
          {"metrics",
           {{"languages", world.language_codes()},
            {"vocab_size", world.vocab.size()},
            {"train_examples", train.size()},
            {"eval_examples", eval.size()}}}};
}

json cmd_augment(const ExperimentConfig& config, const Paths& paths) {
  ensure_dir(paths.out);
  const auto world = load_world(paths.data);
  const auto base = load_examples(paths.data / "train.jsonl");
  const augment::SyntheticTranslator translator(world);
  const augment::AugmentOptions options{config.seed, {}};
  augment::AugmentedDataset data;
  json metrics;
  switch (config.strategy) {
    case augment::Strategy::tq:
      data = augment::build_translate_q(base, world, translator, options);
      break;
    case augment::Strategy::tc:
      data = augment::build_translate_c(base, world, translator, options);
      break;
    case augment::Strategy::tqc:
      data = augment::build_translate_qc(base, world, translator, options);
      break;
    case augment::Strategy::tall: {
      const auto tq = augment::build_translate_q(base, world, translator, options);
      const auto tc = augment::build_translate_c(base, world, translator, options);
      const auto tqc = augment::build_translate_qc(base, world, translator, options);
      data = augment::build_translate_all(tq, tc, tqc);
      metrics["identity"] = {
          {"tq", tq.examples.size()},
          {"tc", tc.examples.size()},
          {"tqc", tqc.examples.size()},
          {"base", base.size()},
          {"holds", data.examples.size() == augment::translate_all_size(tq.examples.size(),
                                                                        tc.examples.size(),
                                                                        tqc.examples.size(),
                                                                        base.size())}};
      break;
    }
  }
  const std::string name = "aug-" + augment::to_string(config.strategy);
  corpus::write_jsonl(data.examples, paths.out / (name + ".jsonl"));
  auto stats = augment::stats_to_json(data);
  write_json_atomic(paths.out / (name + ".stats.json"), stats);
  metrics["records"] = data.examples.size();
  metrics["kept"] = data.kept;
  metrics["failed"] = data.failed;
  return {{"artifacts",
           {{"dataset", (paths.out / (name + ".jsonl")).string()},
            {"stats", (paths.out / (name + ".stats.json")).string()}}},
          {"metrics", metrics}};
}

json cmd_train(const ExperimentConfig& config, const Paths& paths, bool resume,
               std::size_t max_steps) {
  ensure_dir(paths.out);
  const auto& tc = config.train;
  const auto world = load_world(paths.data);
  const auto examples = load_examples(dataset_for(tc.method, paths.data));
  const auto languages = trainer::method_languages(tc.method, world.language_codes());
  auto encoder = config.encoder;
  encoder.vocab_size = world.vocab.size();

  const auto ckpt_path = paths.out / "checkpoint.bin";
  const auto trace_path = paths.out / "trace.csv";
  const json meta = {{"method", trainer::to_string(tc.method)},
                     {"seed", config.seed},
                     {"languages", languages}};

  model::QAModel model = model::QAModel::init(encoder);
  std::optional<model::Discriminator> disc;
  trainer::TrainState state;
  const auto regime = tc.method.regime();
  if (regime == trainer::Regime::adversarial) {
    std::mt19937_64 rng(model::mix_seed(config.seed, 13));
    disc = model::Discriminator::init(encoder.hidden_dim, languages.size(), rng);
  }
  const bool resuming = resume && fs::exists(ckpt_path);
  if (resuming) {
    auto ck = checkpoint::load(ckpt_path);
    if (ck.meta.value("method", "") != meta["method"] || !(ck.model.encoder.config == encoder)) {
      throw DataError("checkpoint " + ckpt_path.string() + " was written by a different run");
    }
    model = std::move(ck.model);
    state = std::move(ck.state);
    if (disc) {
      if (!ck.disc) throw DataError("checkpoint lacks the discriminator needed to resume");
      disc = std::move(ck.disc);
    }
  }

  std::ofstream trace(trace_path, resuming ? std::ios::app : std::ios::trunc);
  if (!trace) throw IoError("cannot write " + trace_path.string());
  if (!resuming) trace << "step,loss,value\n";
  std::map<std::string, double> last;
  trainer::TrainHooks hooks;
  hooks.max_steps = max_steps;
  hooks.on_trace = [&](const trainer::TraceRow& row) {
    trace << row.step << ',' << row.name << ',' << format_double(row.value) << '\n';
    last[row.name] = row.value;
  };

  trainer::TrainResult result;
  std::size_t items = 0;
  if (regime == trainer::Regime::supervised) {
    const auto features = trainer::make_features(examples, world.vocab, tc.packing);
    items = features.size();
    result = trainer::train_supervised(model, features, tc, state, hooks);
  } else if (regime == trainer::Regime::adversarial) {
    std::vector<corpus::RawExample> subset;
    for (const auto& ex : examples) {
      if (std::find(languages.begin(), languages.end(), ex.q_lang) != languages.end()) {
        subset.push_back(ex);
      }
    }
    const auto features = trainer::make_features(subset, world.vocab, tc.packing, languages);
    items = features.size();
    result = trainer::train_adversarial(model, *disc, features, tc, state, hooks);
  } else {
    const std::vector<std::string> targets(languages.begin() + 1, languages.end());
    const auto pairs = trainer::make_pairs(examples, world.vocab, tc.packing, targets);
    items = pairs.size();
    const auto variant =
        regime == trainer::Regime::laf_psa ? trainer::LafVariant::psa : trainer::LafVariant::psa_qs;
    result = trainer::train_laf(model, pairs, tc, variant, state, hooks);
  }
  trace.flush();
  checkpoint::save(ckpt_path, model, disc ? &*disc : nullptr, state, meta);

  json final_losses = json::object();
  for (const auto& [k, v] : last) final_losses[k] = v;
  return {{"artifacts", {{"checkpoint", ckpt_path.string()}, {"trace", trace_path.string()}}},
          {"metrics",
           {{"method", trainer::to_string(tc.method)},
            {"items", items},
            {"steps_run", result.steps},
            {"step", state.step},
            {"total_steps", trainer::total_steps(items, tc)},
            {"optimizer_steps", result.optimizer_steps},
            {"epochs", tc.epochs},
            {"learning_rate", tc.learning_rate},
            {"lambda_adv", tc.lambda_adv},
            {"lambda_psa", tc.lambda_psa},
            {"lambda_qs", tc.lambda_qs},
            {"final", final_losses}}}};
}

json cmd_eval(const ExperimentConfig& config, const Paths& paths, const fs::path& checkpoint_path) {
  ensure_dir(paths.out);
  require_file(checkpoint_path);
  const auto ck = checkpoint::load(checkpoint_path);
  const auto world = load_world(paths.data);
  if (ck.model.encoder.config.vocab_size != world.vocab.size()) {
    throw DataError("checkpoint vocabulary (" + std::to_string(ck.model.encoder.config.vocab_size) +
                    ") does not match the world (" + std::to_string(world.vocab.size()) + ")");
  }
  const auto base = load_examples(paths.data / "eval.jsonl");
  const augment::SyntheticTranslator translator(world);
  const auto cells = resolve_cells(config.cells, world.language_codes());
  const auto set =
      augment::build_eval_set(base, world, translator, cells, model::mix_seed(config.seed, 21));
  const auto report = evalkit::evaluate(ck.model, set.examples, world.vocab, eval_options(config));

  auto j = evalkit::report_to_json(report);
  j["alignment_failures"] = set.failed;
  write_json_atomic(paths.out / "report.json", j);
  evalkit::write_predictions(report, paths.out / "predictions.jsonl");
  return {{"artifacts",
           {{"report", (paths.out / "report.json").string()},
            {"predictions", (paths.out / "predictions.jsonl").string()}}},
          {"metrics", {{"xlt", report.xlt}, {"gxlt", report.gxlt}, {"examples", report.examples.size()}}}};
}

json cmd_compare(const ExperimentConfig& config, const Paths& paths, const fs::path& predictions_a,
                 const fs::path& predictions_b) {
  ensure_dir(paths.out);
  const auto a = evalkit::read_predictions(predictions_a);
  const auto b = evalkit::read_predictions(predictions_b);
  const auto [sa, sb] = evalkit::paired_scores(a, b);
  const auto sig = evalkit::fisher_test(sa, sb, config.permutations, config.seed);

  // Rebuild the eval rows for the dump when the corpus is at hand.
  std::vector<corpus::RawExample> examples;
  if (fs::exists(paths.data / "world.json") && fs::exists(paths.data / "eval.jsonl")) {
    const auto world = load_world(paths.data);
    const auto base = load_examples(paths.data / "eval.jsonl");
    std::set<augment::Cell> present;
    for (const auto& s : a) present.insert({s.q_lang, s.c_lang});
    const std::vector<augment::Cell> cells(present.begin(), present.end());
    const augment::SyntheticTranslator translator(world);
    examples = augment::build_eval_set(base, world, translator, cells,
                                       model::mix_seed(config.seed, 21))
                   .examples;
  }
  const auto dump = evalkit::error_analysis(a, b, examples, config.error_k, config.seed);
  {
    std::ofstream out(paths.out / "errors.jsonl", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (paths.out / "errors.jsonl").string());
    for (const auto& c : dump) out << evalkit::error_case_to_json(c).dump() << '\n';
  }
  auto j = evalkit::significance_to_json(sig);
  // Relative to the output directory so the artifact does not depend on where the run lives.
  auto relative = [&](const fs::path& p) {
    return fs::weakly_canonical(p).lexically_relative(fs::weakly_canonical(paths.out)).generic_string();
  };
  j["a"] = relative(predictions_a);
  j["b"] = relative(predictions_b);
  j["pairs"] = sa.size();
  j["b_wins_dumped"] = dump.size();
  write_json_atomic(paths.out / "compare.json", j);
  return {{"artifacts",
           {{"compare", (paths.out / "compare.json").string()},
            {"errors", (paths.out / "errors.jsonl").string()}}},
          {"metrics", j}};
}

json cmd_stats(const Paths& paths, const fs::path& input) {
  ensure_dir(paths.out);
  const auto examples = load_examples(input);
  const auto s = augment::corpus_stats(examples);
  ordered_json j;
  j["input"] = input.string();
  j["total_pairs"] = s.total_pairs;
  j["avg_question_words"] = s.avg_question_words;
  j["avg_answer_words"] = s.avg_answer_words;
  j["question_types"] = corpus::histogram_to_json(s.question_types);
  write_json_atomic(paths.out / "stats.json", j);
  return {{"artifacts", {{"stats", (paths.out / "stats.json").string()}}},
          {"metrics", json::parse(j.dump())}};
}

json cmd_pipeline(const ExperimentConfig& config, const Paths& paths) {
  ensure_dir(paths.out);
  const Paths root{paths.out, paths.out};
  json stages = json::object();
  stages["gen"] = cmd_gen(config, root);
  for (const auto& s : config.pipeline_strategies) {
    ExperimentConfig c = config;
    c.strategy = augment::parse_strategy(s);
    stages["augment/" + s] = cmd_augment(c, root);
  }
  std::vector<fs::path> prediction_files;
  json table = json::object();
  for (const auto& m : config.pipeline_methods) {
    ExperimentConfig c = config;
    c.train = train_config_for(config, trainer::parse_method(m));
    const Paths run{paths.out / dir_name(c.train.method), paths.out};
    stages["train/" + m] = cmd_train(c, run, false, 0);
    const auto eval = cmd_eval(c, run, run.out / "checkpoint.bin");
    stages["eval/" + m] = eval;
    prediction_files.push_back(run.out / "predictions.jsonl");
    table[m] = eval["metrics"];
  }
  const fs::path baseline = prediction_files.front();
  for (std::size_t i = 1; i < prediction_files.size(); ++i) {
    const auto& m = config.pipeline_methods[i];
    const Paths run{prediction_files[i].parent_path(), paths.out};
    const auto cmp = cmd_compare(config, run, baseline, prediction_files[i]);
    stages["compare/" + m] = cmp;
    table[m]["p_value_vs_" + config.pipeline_methods.front()] = cmp["metrics"]["p_value"];
  }
  return {{"artifacts", json::object()}, {"metrics", table}, {"stages", stages}};
}

// ---- front end ------------------------------------------------------------

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string data;
  std::optional<std::size_t> workers;
  std::vector<std::string> sets;
  std::optional<double> lambda_adv, lambda_psa, lambda_qs;
  std::string strategy, method;
  std::string checkpoint;
  std::string a, b, input;
  bool resume = false;
  std::size_t max_steps = 0;
};

json build_config(const Options& o) {
  json cfg = default_config();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw IoError("cannot open config " + o.config_path);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config " + o.config_path + " is not valid JSON: " + e.what());
    }
    cfg = merge_config(cfg, file);
  }
  for (const auto& s : o.sets) apply_override(cfg, s);
  if (o.seed) cfg["seed"] = *o.seed;
  if (o.workers) cfg["eval"]["workers"] = *o.workers;
  if (o.lambda_adv) cfg["train"]["lambda_adv"] = *o.lambda_adv;
  if (o.lambda_psa) cfg["train"]["lambda_psa"] = *o.lambda_psa;
  if (o.lambda_qs) cfg["train"]["lambda_qs"] = *o.lambda_qs;
  if (!o.strategy.empty()) cfg["augment"]["strategy"] = o.strategy;
  if (!o.method.empty()) cfg["train"]["method"] = o.method;
  return cfg;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  return 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-lingual extractive QA experiments on a synthetic multilingual world", "xlqa"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "JSON configuration file");
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--data", o.data, "Directory holding world/corpus files (default: --out)");
  app.add_option("--workers", o.workers, "Evaluation worker threads");
  app.add_option("--set", o.sets, "Config override key=value (repeatable)");
  app.add_option("--lambda-adv", o.lambda_adv, "Adversarial loss weight");
  app.add_option("--lambda-psa", o.lambda_psa, "PSA loss weight");
  app.add_option("--lambda-qs", o.lambda_qs, "QS loss weight");

  auto* gen = app.add_subcommand("gen", "Generate the world and the English corpora");
  auto* aug = app.add_subcommand("augment", "Build a translation-augmented dataset");
  aug->add_option("--strategy", o.strategy, "TQ, TC, TQC or TALL");
  auto* train = app.add_subcommand("train", "Train one method");
  train->add_option("--method", o.method, "ZS, TQ, TC, TQC, TALL, AT_all, AT_single(l), ...");
  train->add_flag("--resume", o.resume, "Continue from checkpoint.bin in --out");
  train->add_option("--max-steps", o.max_steps, "Stop after this many batches");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the configured cells");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint (default: <out>/checkpoint.bin)");
  auto* compare = app.add_subcommand("compare", "Paired significance test and error dump");
  compare->add_option("--a", o.a, "Baseline predictions.jsonl")->required();
  compare->add_option("--b", o.b, "Candidate predictions.jsonl")->required();
  auto* stats = app.add_subcommand("stats", "Corpus statistics of a JSONL dataset");
  stats->add_option("--input", o.input, "Dataset JSONL")->required();
  auto* pipeline = app.add_subcommand("pipeline", "Run gen, augment, train, eval and compare");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  const auto started = std::chrono::steady_clock::now();
  try {
    const auto config = resolve_config(build_config(o));
    const Paths paths{o.out, o.data.empty() ? fs::path(o.out) : fs::path(o.data)};
    json summary;
    std::string command;
    if (gen->parsed()) {
      command = "gen";
      summary = cmd_gen(config, paths);
    } else if (aug->parsed()) {
      command = "augment";
      summary = cmd_augment(config, paths);
    } else if (train->parsed()) {
      command = "train";
      summary = cmd_train(config, paths, o.resume, o.max_steps);
    } else if (eval->parsed()) {
      command = "eval";
      summary = cmd_eval(config, paths,
                         o.checkpoint.empty() ? paths.out / "checkpoint.bin" : fs::path(o.checkpoint));
    } else if (compare->parsed()) {
      command = "compare";
      summary = cmd_compare(config, paths, o.a, o.b);
    } else if (stats->parsed()) {
      command = "stats";
      summary = cmd_stats(paths, o.input);
    } else if (pipeline->parsed()) {
      command = "pipeline";
      summary = cmd_pipeline(config, paths);
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    ordered_json manifest;
    manifest["tool"] = "xlqa";
    manifest["version"] = kToolVersion;
    manifest["command"] = command;
    std::vector<std::string> args(argv, argv + argc);
    manifest["argv"] = args;
    manifest["config"] = config.snapshot;
    manifest["artifacts"] = summary.value("artifacts", json::object());
    manifest["metrics"] = summary.value("metrics", json::object());
    if (summary.contains("stages")) manifest["stages"] = summary["stages"];
    manifest["wall_clock_seconds"] = seconds;
    write_json_atomic(paths.out / "manifest.json", manifest);
    out << manifest["metrics"].dump(2) << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "xlqa: error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("xlqa");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace xlqa::cli
