#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "tripletsearch/embedding.hpp"

namespace tripletsearch {

inline constexpr int kCheckpointFormatVersion = 1;

/// A model plus free-form run metadata (margin, sampler settings, ...).
struct Checkpoint {
  EmbeddingModel model;
  nlohmann::json metadata = nlohmann::json::object();
};

/// {format_version, arch, input_dim, [hidden_dim], output_dim, seed, params, metadata}.
/// params maps "<layer>.weight" / "<layer>.bias" to {shape, data}; doubles are
/// written as shortest round-trip decimals so reloading is bit-exact.
nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tripletsearch
