#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tripletsearch/dataset.hpp"
#include "tripletsearch/retrieval.hpp"
#include "tripletsearch/run_config.hpp"
#include "tripletsearch/training.hpp"

namespace tripletsearch {

struct SynthSummary {
  std::size_t records = 0;
  std::size_t items = 0;
  std::size_t classes = 0;
};

/// Generates a dataset and writes it as CSV.
SynthSummary cmd_synth(const SynthConfig& cfg, const std::filesystem::path& out, std::ostream& log);

struct TrainOutcome {
  TrainResult result;
  RunConfig resolved;
};

/// Trains and writes config.json, checkpoint.json, metrics.jsonl and
/// report.json under cfg.output_dir.
TrainOutcome cmd_train(RunConfig cfg, std::ostream& log);

struct EvalArgs {
  std::filesystem::path checkpoint;
  DataSource data;
  std::optional<EvalProtocol> protocol;
  std::vector<std::size_t> k_list = kDefaultKList;
  std::filesystem::path output_dir = "eval";
};

/// Writes config.json, report.json, recall.csv and confusion.csv.
EvalReport cmd_eval(EvalArgs args, std::ostream& log);

enum class SweepKind { BatchSize, WithinClass };

std::string to_string(SweepKind kind);
SweepKind parse_sweep_kind(const std::string& s);

struct SweepArgs {
  SweepKind kind = SweepKind::BatchSize;
  std::vector<double> values;
  /// base.output_dir is the sweep root; run i goes to run_<i>/ with seed
  /// base.train.seed + i.
  RunConfig base;
};

struct SweepRow {
  double value = 0.0;
  double recall_at_1 = 0.0;
  double mean_nonzero_fraction = 0.0;
};

/// Window used for sweep nonzero-fraction averages: the last three quarters
/// of training, i.e. steps (steps/4, steps].
std::pair<std::size_t, std::size_t> nonzero_fraction_window(std::size_t steps);

/// One train+eval per value; writes sweep.csv (`value,recall_at_1,mean_nonzero_fraction`).
std::vector<SweepRow> cmd_sweep(const SweepArgs& args, std::ostream& log);

}  // namespace tripletsearch
