#include "tripletsearch/sampling.hpp"

#include <unordered_set>

#include "tripletsearch/errors.hpp"

namespace tripletsearch {

namespace {

void check_batch(std::span<const Vector> anchors, std::span<const Vector> positives,
                 std::span<const std::size_t> items) {
  if (anchors.size() != positives.size() || anchors.size() != items.size())
    throw UsageError("negative selection: anchors, positives and items differ in length");
  if (anchors.size() < 2) throw UsageError("negative selection: batch needs at least two pairs");
}

const Vector& slot(std::span<const Vector> anchors, std::span<const Vector> positives, SlotRef ref) {
  return ref.role == Role::Positive ? positives[ref.pair] : anchors[ref.pair];
}

// Legal negatives for pair i in tie-break order: ascending j, positive first.
template <typename Visit>
void for_each_candidate(std::span<const std::size_t> items, std::size_t i, bool from_anchors,
                        Visit&& visit) {
  for (std::size_t j = 0; j < items.size(); ++j) {
    if (j == i || items[j] == items[i]) continue;
    visit(SlotRef{j, Role::Positive});
    if (from_anchors) visit(SlotRef{j, Role::Anchor});
  }
}

}  // namespace

std::string to_string(NegativeStrategy s) {
  return s == NegativeStrategy::BatchHard ? "batch-hard" : "random";
}

NegativeStrategy parse_negative_strategy(const std::string& s) {
  if (s == "batch-hard" || s == "hard") return NegativeStrategy::BatchHard;
  if (s == "random" || s == "uniform") return NegativeStrategy::UniformRandom;
  throw UsageError("unknown negative strategy '" + s + "' (expected batch-hard or random)");
}

TripletSet batch_hard_select(std::span<const Vector> anchors, std::span<const Vector> positives,
                             std::span<const std::size_t> items, bool from_anchors) {
  check_batch(anchors, positives, items);
  TripletSet out;
  out.triplets.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    std::optional<SlotRef> best;
    double best_sim = 0.0;
    for_each_candidate(items, i, from_anchors, [&](SlotRef c) {
      const double s = cosine_similarity(anchors[i], slot(anchors, positives, c));
      if (!best || s > best_sim) {
        best = c;
        best_sim = s;
      }
    });
    if (!best) {
      ++out.dropped;
      continue;
    }
    out.triplets.push_back({i, *best, cosine_similarity(anchors[i], positives[i]), best_sim, 0.0});
  }
  return out;
}

TripletSet random_negative_select(std::span<const Vector> anchors,
                                  std::span<const Vector> positives,
                                  std::span<const std::size_t> items, bool from_anchors, Rng& rng) {
  check_batch(anchors, positives, items);
  TripletSet out;
  std::vector<SlotRef> candidates;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    candidates.clear();
    for_each_candidate(items, i, from_anchors, [&](SlotRef c) { candidates.push_back(c); });
    if (candidates.empty()) {
      ++out.dropped;
      continue;
    }
    const SlotRef neg = candidates[uniform_index(rng, candidates.size())];
    out.triplets.push_back({i, neg, cosine_similarity(anchors[i], positives[i]),
                            cosine_similarity(anchors[i], slot(anchors, positives, neg)), 0.0});
  }
  return out;
}

PairIndex::PairIndex(const Dataset& ds, PairMode mode)
    : ds_(&ds),
      mode_(mode),
      positives_(ds.size()),
      class_pairable_items_(ds.class_count()),
      class_pairable_records_(ds.class_count()),
      item_pairable_records_(ds.item_count()) {
  validate_pair_mode(ds, mode);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    positives_[r] = positive_candidates(ds, r, mode);
    if (positives_[r].empty()) continue;
    pairable_records_.push_back(r);
    item_pairable_records_[ds.item_of(r)].push_back(r);
    class_pairable_records_[ds.class_of(r)].push_back(r);
  }
  for (std::size_t item = 0; item < ds.item_count(); ++item) {
    if (item_pairable_records_[item].empty()) continue;
    pairable_items_.push_back(item);
    class_pairable_items_[ds.class_of_item(item)].push_back(item);
  }
}

Sampler::Sampler(const Dataset& ds, SamplerConfig cfg, PairMode mode)
    : ds_(&ds), cfg_(cfg), index_(ds, mode), rng_(make_rng(cfg.seed, rng_stream::kSampler)) {
  if (cfg_.batch_pairs < 2) throw ConfigError("batch_pairs must be at least 2");
  if (!(cfg_.within_class_fraction >= 0.0 && cfg_.within_class_fraction <= 1.0))
    throw ConfigError("within_class_fraction must lie in [0, 1]");
  if (index_.pairable_items().size() < cfg_.batch_pairs)
    throw ConfigError("only " + std::to_string(index_.pairable_items().size()) +
                      " pairable items under pair mode '" + to_string(mode) +
                      "', fewer than batch_pairs = " + std::to_string(cfg_.batch_pairs));
}

std::size_t Sampler::draw_positive(std::size_t anchor) {
  const auto& candidates = index_.positives(anchor);
  return candidates[uniform_index(rng_, candidates.size())];
}

Minibatch Sampler::sample() {
  if (cfg_.within_class_fraction > 0.0 && uniform_unit(rng_) < cfg_.within_class_fraction)
    return within_class(class_for_batch());

  Minibatch batch;
  batch.pairs.reserve(cfg_.batch_pairs);
  const auto& pool = index_.pairable_records();
  std::unordered_set<std::size_t> used_items;
  while (batch.pairs.size() < cfg_.batch_pairs) {
    const std::size_t anchor = pool[uniform_index(rng_, pool.size())];
    if (!used_items.insert(ds_->item_of(anchor)).second) continue;
    batch.pairs.push_back({anchor, draw_positive(anchor)});
  }
  return batch;
}

Minibatch Sampler::within_class(std::size_t cls) {
  if (cls >= ds_->class_count()) throw UsageError("within_class: class index out of range");
  const auto& items = index_.pairable_items_of_class(cls);
  if (items.empty())
    throw ConfigError("class '" + ds_->class_name(cls) + "' has no pairable records");

  Minibatch batch;
  batch.in_class = cls;
  batch.pairs.reserve(cfg_.batch_pairs);
  if (items.size() < cfg_.batch_pairs) {
    ++fallbacks_;
    while (batch.pairs.size() < cfg_.batch_pairs) {
      const auto& recs = index_.pairable_records_of_item(items[uniform_index(rng_, items.size())]);
      const std::size_t anchor = recs[uniform_index(rng_, recs.size())];
      batch.pairs.push_back({anchor, draw_positive(anchor)});
    }
    return batch;
  }
  const auto& pool = index_.pairable_records_of_class(cls);
  std::unordered_set<std::size_t> used_items;
  while (batch.pairs.size() < cfg_.batch_pairs) {
    const std::size_t anchor = pool[uniform_index(rng_, pool.size())];
    if (!used_items.insert(ds_->item_of(anchor)).second) continue;
    batch.pairs.push_back({anchor, draw_positive(anchor)});
  }
  return batch;
}

std::size_t Sampler::class_for_batch() {
  const auto& items = index_.pairable_items();
  return ds_->class_of_item(items[uniform_index(rng_, items.size())]);
}

}  // namespace tripletsearch
