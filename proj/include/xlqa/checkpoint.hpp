#pragma once

// Binary checkpoints: model (and optional discriminator) parameters plus the
// optimizer state needed to resume training bit-exactly.
//
// Layout: magic "XLQACKPT", u64 header length, JSON header, then named
// tensors (u32 name length, name, u32 rank, u64 dims, f64 values). Integers
// and doubles are little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>

#include "json.hpp"

#include "xlqa/model.hpp"
#include "xlqa/trainer.hpp"

namespace xlqa::checkpoint {

inline constexpr int kVersion = 1;

struct Checkpoint {
  model::QAModel model;
  std::optional<model::Discriminator> disc;
  trainer::TrainState state;
  nlohmann::json meta;  // free-form run description
};

nlohmann::json encoder_config_to_json(const model::EncoderConfig& config);
// Throws DataError on missing or ill-typed fields.
model::EncoderConfig encoder_config_from_json(const nlohmann::json& j);

// Writes to a temporary sibling and renames it into place.
void save(const std::filesystem::path& path, const model::QAModel& model,
          const model::Discriminator* disc, const trainer::TrainState& state,
          const nlohmann::json& meta = nlohmann::json::object());

// Throws IoError when unreadable or truncated and DataError on a bad magic,
// version, or tensor set. Nothing partial is returned.
Checkpoint load(const std::filesystem::path& path);

}  // namespace xlqa::checkpoint
