#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "tripletsearch/dataset.hpp"
#include "tripletsearch/retrieval.hpp"
#include "tripletsearch/training.hpp"

namespace tripletsearch {

/// Either a CSV file or an inline synthetic configuration.
struct DataSource {
  std::optional<std::filesystem::path> path;
  std::optional<SynthConfig> synth;

  bool operator==(const DataSource&) const = default;
};

Dataset load(const DataSource& source);

/// Everything needed to replay one train+eval run.
struct RunConfig {
  DataSource data;
  /// Evaluation set; when absent, either the held-out items of `data`
  /// (holdout_fraction > 0) or `data` itself.
  std::optional<DataSource> eval_data;
  double holdout_fraction = 0.0;
  std::uint64_t split_seed = 0;
  TrainConfig train;
  /// Unset means: cross when the evaluation set has both domains, else single.
  std::optional<EvalProtocol> protocol;
  std::filesystem::path output_dir = "run";

  bool operator==(const RunConfig&) const = default;
};

struct RunData {
  Dataset train;
  Dataset eval;
};

/// Loads/generates the datasets and resolves `protocol`. Throws ConfigError
/// on any inconsistency.
RunData prepare(RunConfig& cfg);

nlohmann::ordered_json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

nlohmann::ordered_json to_json(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json(const nlohmann::json& j, SamplerConfig base = {});

nlohmann::ordered_json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::ordered_json to_json(const DataSource& src);
DataSource data_source_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Missing keys keep the values already in `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace tripletsearch
