#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "json.hpp"
#include "tripletsearch/dataset.hpp"
#include "tripletsearch/embedding.hpp"
#include "tripletsearch/retrieval.hpp"
#include "tripletsearch/sampling.hpp"

namespace tripletsearch {

/// max(0, s_an - s_ap + margin)
double triplet_loss(double s_ap, double s_an, double margin);

struct OptimizerConfig {
  double lr = 1e-3;
  double momentum = 0.9;

  bool operator==(const OptimizerConfig&) const = default;
};

struct ModelConfig {
  Architecture arch = Architecture::Linear;
  /// 0 means "same as the input dimension".
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;

  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  double margin = 0.1;
  SamplerConfig sampler;
  PairMode pair_mode = PairMode::AllPairs;
  std::size_t steps = 2000;
  OptimizerConfig optimizer;
  ModelConfig model;
  /// Evaluate at step 0, every eval_every steps, and after the last step.
  std::size_t eval_every = 500;
  EvalProtocol eval_protocol = EvalProtocol::SinglePool;
  std::vector<std::size_t> k_list = kDefaultKList;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

/// Throws ConfigError on any out-of-range field.
void validate(const TrainConfig& cfg);

struct StepMetrics {
  std::size_t step = 0;
  double mean_loss = 0.0;
  double nonzero_fraction = 0.0;
  std::size_t triplet_count = 0;
  bool in_class = false;

  bool operator==(const StepMetrics&) const = default;
};

nlohmann::ordered_json to_json(const StepMetrics& m);

struct BatchResult {
  double mean_loss = 0.0;
  TripletSet triplets;
  StepMetrics metrics;
};

/// Embeds every anchor and positive once, selects negatives (batch-hard, or
/// uniformly at random using `rng`), and averages the hinge over the
/// surviving triplets. An empty triplet set yields loss 0 and
/// triplet_count 0.
BatchResult batch_loss(const EmbeddingModel& model, const Minibatch& batch, const TrainConfig& cfg,
                       const Dataset& ds, Rng* rng = nullptr);

/// Gradient of batch_loss with the negative selection held fixed. Adds into
/// `grads` (which must be zeroed by the caller) and returns the batch result.
BatchResult accumulate_batch_gradients(const EmbeddingModel& model, const Minibatch& batch,
                                       const TrainConfig& cfg, const Dataset& ds,
                                       GradientBuffer& grads, Rng* rng = nullptr);

GradientBuffer batch_gradients(const EmbeddingModel& model, const Minibatch& batch,
                               const TrainConfig& cfg, const Dataset& ds, Rng* rng = nullptr);

/// SGD with momentum: v <- mu v + g; theta <- theta - lr v.
class SgdMomentum {
 public:
  SgdMomentum(const EmbeddingModel& model, OptimizerConfig cfg);

  /// Throws TrainingAborted, leaving model and velocity untouched, if the
  /// step would produce a non-finite value.
  void apply(EmbeddingModel& model, const GradientBuffer& grads);

  const GradientBuffer& velocity() const { return velocity_; }

 private:
  OptimizerConfig cfg_;
  GradientBuffer velocity_;
};

struct EvalSnapshot {
  std::size_t step;
  EvalReport report;
};

struct TrainResult {
  EmbeddingModel model;
  std::vector<StepMetrics> steps;
  std::vector<EvalSnapshot> evals;
  std::size_t within_class_fallbacks = 0;
};

/// sample -> select -> loss -> gradients -> update, cfg.steps times.
/// Evaluation runs on `eval_ds` (the training set when absent).
TrainResult train(const Dataset& ds, const TrainConfig& cfg,
                  const Dataset* eval_ds = nullptr);

/// One StepMetrics object per line, with {"eval": ..., "step": n} lines
/// after the step they follow (step 0 first).
void write_metrics_log(const TrainResult& result, std::ostream& out);

/// Mean nonzero_fraction over steps in [first, last] (1-based, inclusive).
double mean_nonzero_fraction(const std::vector<StepMetrics>& steps, std::size_t first,
                             std::size_t last);

}  // namespace tripletsearch
