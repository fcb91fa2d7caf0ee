#include "tripletsearch/training.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "tripletsearch/errors.hpp"

namespace tripletsearch {

double triplet_loss(double s_ap, double s_an, double margin) {
  return std::max(0.0, s_an - s_ap + margin);
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.margin >= 0.0) || !std::isfinite(cfg.margin)) throw ConfigError("margin must be >= 0");
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
  if (!(cfg.optimizer.lr > 0.0) || !std::isfinite(cfg.optimizer.lr))
    throw ConfigError("learning rate must be > 0");
  if (!(cfg.optimizer.momentum >= 0.0 && cfg.optimizer.momentum < 1.0))
    throw ConfigError("momentum must lie in [0, 1)");
  if (cfg.eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (cfg.sampler.batch_pairs < 2) throw ConfigError("batch_pairs must be at least 2");
  if (!(cfg.sampler.within_class_fraction >= 0.0 && cfg.sampler.within_class_fraction <= 1.0))
    throw ConfigError("within_class_fraction must lie in [0, 1]");
  if (cfg.k_list.empty() ||
      std::find(cfg.k_list.begin(), cfg.k_list.end(), std::size_t{0}) != cfg.k_list.end())
    throw ConfigError("k list must be non-empty with every k >= 1");
}

nlohmann::ordered_json to_json(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["mean_loss"] = m.mean_loss;
  j["nonzero_fraction"] = m.nonzero_fraction;
  j["triplet_count"] = m.triplet_count;
  j["in_class"] = m.in_class;
  return j;
}

namespace {

struct BatchEmbeddings {
  std::vector<Vector> anchors;
  std::vector<Vector> positives;
  std::vector<std::size_t> items;
};

BatchEmbeddings embed_batch(const EmbeddingModel& model, const Minibatch& batch,
                            const Dataset& ds) {
  BatchEmbeddings e;
  e.anchors.reserve(batch.pairs.size());
  e.positives.reserve(batch.pairs.size());
  e.items.reserve(batch.pairs.size());
  for (const auto& [a, p] : batch.pairs) {
    if (a >= ds.size() || p >= ds.size()) throw UsageError("minibatch refers to a missing record");
    if (ds.item_of(a) != ds.item_of(p))
      throw UsageError("minibatch pair does not share an item_id");
    e.anchors.push_back(model.forward(ds.record(a).features));
    e.positives.push_back(model.forward(ds.record(p).features));
    e.items.push_back(ds.item_of(a));
  }
  return e;
}

BatchResult score_batch(const EmbeddingModel& model, const Minibatch& batch, const TrainConfig& cfg,
                        const Dataset& ds, Rng* rng, BatchEmbeddings& emb) {
  emb = embed_batch(model, batch, ds);
  BatchResult out;
  if (cfg.sampler.negatives == NegativeStrategy::UniformRandom) {
    if (!rng) throw UsageError("random negative selection needs an RNG");
    out.triplets = random_negative_select(emb.anchors, emb.positives, emb.items,
                                          cfg.sampler.negatives_from_anchors, *rng);
  } else {
    out.triplets = batch_hard_select(emb.anchors, emb.positives, emb.items,
                                     cfg.sampler.negatives_from_anchors);
  }
  std::size_t nonzero = 0;
  double sum = 0.0;
  for (auto& t : out.triplets.triplets) {
    t.loss = triplet_loss(t.s_ap, t.s_an, cfg.margin);
    sum += t.loss;
    if (t.loss > 0.0) ++nonzero;
  }
  const std::size_t n = out.triplets.triplets.size();
  out.mean_loss = n ? sum / static_cast<double>(n) : 0.0;
  out.metrics.mean_loss = out.mean_loss;
  out.metrics.triplet_count = n;
  out.metrics.nonzero_fraction = n ? static_cast<double>(nonzero) / static_cast<double>(n) : 0.0;
  out.metrics.in_class = batch.in_class.has_value();
  return out;
}

}  // namespace

BatchResult batch_loss(const EmbeddingModel& model, const Minibatch& batch, const TrainConfig& cfg,
                       const Dataset& ds, Rng* rng) {
  BatchEmbeddings emb;
  return score_batch(model, batch, cfg, ds, rng, emb);
}

BatchResult accumulate_batch_gradients(const EmbeddingModel& model, const Minibatch& batch,
                                       const TrainConfig& cfg, const Dataset& ds,
                                       GradientBuffer& grads, Rng* rng) {
  BatchEmbeddings emb;
  BatchResult result = score_batch(model, batch, cfg, ds, rng, emb);
  const auto& triplets = result.triplets.triplets;
  if (triplets.empty()) return result;

  const std::size_t dim = model.output_dim();
  const double scale = 1.0 / static_cast<double>(triplets.size());
  std::vector<Vector> up_anchor(batch.pairs.size());
  std::vector<Vector> up_positive(batch.pairs.size());
  auto upstream = [&](SlotRef ref) -> Vector& {
    auto& v = ref.role == Role::Anchor ? up_anchor[ref.pair] : up_positive[ref.pair];
    if (v.empty()) v.assign(dim, 0.0);
    return v;
  };

  for (const auto& t : triplets) {
    if (!(t.loss > 0.0)) continue;
    const SlotRef a{t.pair, Role::Anchor};
    const SlotRef p{t.pair, Role::Positive};
    const Vector& neg = t.negative.role == Role::Anchor ? emb.anchors[t.negative.pair]
                                                        : emb.positives[t.negative.pair];
    const auto g_an = grad_cosine(emb.anchors[t.pair], neg);
    const auto g_ap = grad_cosine(emb.anchors[t.pair], emb.positives[t.pair]);
    Vector& ua = upstream(a);
    for (std::size_t i = 0; i < dim; ++i) ua[i] += scale * (g_an.d_u[i] - g_ap.d_u[i]);
    Vector& up = upstream(p);
    for (std::size_t i = 0; i < dim; ++i) up[i] -= scale * g_ap.d_v[i];
    Vector& un = upstream(t.negative);
    for (std::size_t i = 0; i < dim; ++i) un[i] += scale * g_an.d_v[i];
  }

  for (std::size_t i = 0; i < batch.pairs.size(); ++i) {
    if (!up_anchor[i].empty())
      model.backward(ds.record(batch.pairs[i].anchor).features, up_anchor[i], grads);
    if (!up_positive[i].empty())
      model.backward(ds.record(batch.pairs[i].positive).features, up_positive[i], grads);
  }
  return result;
}

GradientBuffer batch_gradients(const EmbeddingModel& model, const Minibatch& batch,
                               const TrainConfig& cfg, const Dataset& ds, Rng* rng) {
  GradientBuffer grads = model.make_gradient_buffer();
  accumulate_batch_gradients(model, batch, cfg, ds, grads, rng);
  return grads;
}

SgdMomentum::SgdMomentum(const EmbeddingModel& model, OptimizerConfig cfg)
    : cfg_(cfg), velocity_(model.make_gradient_buffer()) {}

void SgdMomentum::apply(EmbeddingModel& model, const GradientBuffer& grads) {
  auto params = model.blocks();
  auto vel = velocity_.blocks();
  const auto g = grads.blocks();
  if (params.size() != g.size() || params.size() != vel.size())
    throw UsageError("optimizer: gradient buffer does not match model");
  for (std::size_t b = 0; b < params.size(); ++b)
    if (params[b].size() != g[b].size() || params[b].size() != vel[b].size())
      throw UsageError("optimizer: gradient buffer does not match model");

  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double v = cfg_.momentum * vel[b][i] + g[b][i];
      const double theta = params[b][i] - cfg_.lr * v;
      if (!std::isfinite(v) || !std::isfinite(theta))
        throw TrainingAborted("non-finite parameter update in block " + std::to_string(b) +
                              ", element " + std::to_string(i) + " (gradient " +
                              std::to_string(g[b][i]) + ")");
    }
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      vel[b][i] = cfg_.momentum * vel[b][i] + g[b][i];
      params[b][i] -= cfg_.lr * vel[b][i];
    }
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const Dataset* eval_ds) {
  validate(cfg);
  const Dataset& eval_set = eval_ds ? *eval_ds : ds;
  validate_protocol(eval_set, cfg.eval_protocol);

  const std::size_t in = ds.input_dim();
  const std::size_t out_dim = cfg.model.output_dim ? cfg.model.output_dim : in;
  const std::size_t hidden = cfg.model.hidden_dim ? cfg.model.hidden_dim : in;
  TrainResult result{EmbeddingModel::initialized(cfg.model.arch, in, hidden, out_dim, cfg.seed),
                     {}, {}, 0};
  Sampler sampler(ds, cfg.sampler, cfg.pair_mode);
  SgdMomentum optimizer(result.model, cfg.optimizer);
  GradientBuffer grads = result.model.make_gradient_buffer();

  auto snapshot = [&](std::size_t step) {
    result.evals.push_back({step, evaluate(result.model, eval_set, cfg.eval_protocol, cfg.k_list)});
  };
  snapshot(0);
  result.steps.reserve(cfg.steps);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const Minibatch batch = sampler.sample();
    grads.zero();
    BatchResult br = accumulate_batch_gradients(result.model, batch, cfg, ds, grads, &sampler.rng());
    optimizer.apply(result.model, grads);
    br.metrics.step = step;
    result.steps.push_back(br.metrics);
    if (step % cfg.eval_every == 0 || step == cfg.steps) snapshot(step);
  }
  result.within_class_fallbacks = sampler.fallback_count();
  return result;
}

void write_metrics_log(const TrainResult& result, std::ostream& out) {
  auto eval_line = [&](const EvalSnapshot& s) {
    nlohmann::ordered_json j;
    j["eval"] = to_json(s.report);
    j["step"] = s.step;
    out << j.dump() << '\n';
  };
  std::size_t next_eval = 0;
  while (next_eval < result.evals.size() && result.evals[next_eval].step == 0)
    eval_line(result.evals[next_eval++]);
  for (const auto& m : result.steps) {
    out << to_json(m).dump() << '\n';
    while (next_eval < result.evals.size() && result.evals[next_eval].step == m.step)
      eval_line(result.evals[next_eval++]);
  }
}

double mean_nonzero_fraction(const std::vector<StepMetrics>& steps, std::size_t first,
                             std::size_t last) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& m : steps)
    if (m.step >= first && m.step <= last) {
      sum += m.nonzero_fraction;
      ++n;
    }
  if (n == 0) throw UsageError("no training steps in the requested range");
  return sum / static_cast<double>(n);
}

}  // namespace tripletsearch
