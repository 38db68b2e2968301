#pragma once

// Experiment driver: a validated JSON configuration, the pipeline
// subcommands, and the command-line front end.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "xlqa/augment.hpp"
#include "xlqa/model.hpp"
#include "xlqa/trainer.hpp"

namespace xlqa::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Every recognised key with its default value. Nested objects group keys;
// dotted paths ("train.learning_rate") address them.
nlohmann::json default_config();

// Overlays `overrides` onto `base`. Throws ConfigError on a key absent from
// the defaults or a value whose JSON type differs from the default's.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& overrides);

// Applies "dotted.key=value"; the value is parsed as JSON when possible and
// taken as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t num_languages = 5;
  std::size_t vocab_size = 2048;
  double tag_safety = 1.0;
  std::size_t train_size = 2000;
  std::size_t eval_size = 400;
  augment::Strategy strategy = augment::Strategy::tq;
  model::EncoderConfig encoder;
  trainer::TrainConfig train;
  std::vector<std::string> cells;  // "full", "diagonal", or "q-c" entries
  std::size_t workers = 1;
  std::size_t permutations = 10000;
  std::size_t error_k = 20;
  std::vector<std::string> pipeline_strategies;
  std::vector<std::string> pipeline_methods;
  nlohmann::json snapshot;  // the merged configuration document
};

// Validates and types a merged configuration (ConfigError on violations).
ExperimentConfig resolve_config(const nlohmann::json& merged);

// Training configuration for one method under an experiment config.
trainer::TrainConfig train_config_for(const ExperimentConfig& config,
                                      const trainer::MethodSpec& method);

// Expands the cell selection against the world's language codes.
std::vector<augment::Cell> resolve_cells(const std::vector<std::string>& spec,
                                         const std::vector<std::string>& languages);

struct Paths {
  std::filesystem::path out;   // where this command writes
  std::filesystem::path data;  // where gen/augment outputs are read from
};

// Each command returns a JSON summary that is also folded into its manifest.
nlohmann::json cmd_gen(const ExperimentConfig& config, const Paths& paths);
nlohmann::json cmd_augment(const ExperimentConfig& config, const Paths& paths);
nlohmann::json cmd_train(const ExperimentConfig& config, const Paths& paths, bool resume,
                         std::size_t max_steps);
nlohmann::json cmd_eval(const ExperimentConfig& config, const Paths& paths,
                        const std::filesystem::path& checkpoint);
nlohmann::json cmd_compare(const ExperimentConfig& config, const Paths& paths,
                           const std::filesystem::path& predictions_a,
                           const std::filesystem::path& predictions_b);
nlohmann::json cmd_stats(const Paths& paths, const std::filesystem::path& input);
// gen -> augment (each strategy) -> train (each method) -> eval -> compare
// against the first method.
nlohmann::json cmd_pipeline(const ExperimentConfig& config, const Paths& paths);

// Writes through a temporary file and a rename.
void write_json_atomic(const std::filesystem::path& path, const nlohmann::ordered_json& j);

// Parses arguments and runs a subcommand. Returns the process exit code:
// 0 success, 1 I/O or data error, 2 configuration error, 3 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xlqa::cli
