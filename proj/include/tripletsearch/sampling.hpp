#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tripletsearch/dataset.hpp"
#include "tripletsearch/embedding.hpp"
#include "tripletsearch/random.hpp"

namespace tripletsearch {

/// How the negative of each pair is chosen from the other pairs in the batch.
/// UniformRandom is the weak baseline used for ablations.
enum class NegativeStrategy { BatchHard, UniformRandom };

std::string to_string(NegativeStrategy s);
NegativeStrategy parse_negative_strategy(const std::string& s);

struct SamplerConfig {
  std::size_t batch_pairs = 48;
  double within_class_fraction = 0.0;
  bool negatives_from_anchors = false;
  NegativeStrategy negatives = NegativeStrategy::BatchHard;
  std::uint64_t seed = 0;

  bool operator==(const SamplerConfig&) const = default;
};

struct AnchorPositive {
  std::size_t anchor;
  std::size_t positive;

  bool operator==(const AnchorPositive&) const = default;
};

struct Minibatch {
  std::vector<AnchorPositive> pairs;
  /// Set when every pair was drawn from this class.
  std::optional<std::size_t> in_class;

  bool operator==(const Minibatch&) const = default;
};

enum class Role { Positive, Anchor };

/// A batch slot: pair index plus which member of that pair.
struct SlotRef {
  std::size_t pair;
  Role role;

  bool operator==(const SlotRef&) const = default;
};

struct Triplet {
  std::size_t pair;
  SlotRef negative;
  double s_ap = 0.0;
  double s_an = 0.0;
  double loss = 0.0;

  bool operator==(const Triplet&) const = default;
};

struct TripletSet {
  std::vector<Triplet> triplets;
  /// Pairs with no legal negative in the batch.
  std::size_t dropped = 0;

  bool operator==(const TripletSet&) const = default;
};

/// For each pair i, the candidate most cosine-similar to anchors[i] among
/// positives[j] (and anchors[j] if from_anchors) with j != i and
/// items[j] != items[i]. Ties go to the lowest j, positive before anchor.
/// Pairs without any candidate are dropped. s_ap / s_an are filled in.
TripletSet batch_hard_select(std::span<const Vector> anchors, std::span<const Vector> positives,
                             std::span<const std::size_t> items, bool from_anchors);

/// Same candidate sets as batch_hard_select, but the negative is drawn
/// uniformly at random.
TripletSet random_negative_select(std::span<const Vector> anchors,
                                  std::span<const Vector> positives,
                                  std::span<const std::size_t> items, bool from_anchors, Rng& rng);

/// Precomputed pairing structure of a dataset under one pair mode.
class PairIndex {
 public:
  PairIndex(const Dataset& ds, PairMode mode);

  const Dataset& dataset() const { return *ds_; }
  PairMode mode() const { return mode_; }

  const std::vector<std::size_t>& positives(std::size_t record) const { return positives_[record]; }
  bool pairable(std::size_t record) const { return !positives_[record].empty(); }

  std::size_t pairable_record_count() const { return pairable_records_.size(); }
  const std::vector<std::size_t>& pairable_records() const { return pairable_records_; }
  /// Items with at least one pairable record, ascending.
  const std::vector<std::size_t>& pairable_items() const { return pairable_items_; }
  const std::vector<std::size_t>& pairable_items_of_class(std::size_t cls) const {
    return class_pairable_items_[cls];
  }
  const std::vector<std::size_t>& pairable_records_of_class(std::size_t cls) const {
    return class_pairable_records_[cls];
  }
  const std::vector<std::size_t>& pairable_records_of_item(std::size_t item) const {
    return item_pairable_records_[item];
  }

 private:
  const Dataset* ds_;
  PairMode mode_;
  std::vector<std::vector<std::size_t>> positives_;
  std::vector<std::size_t> pairable_records_;
  std::vector<std::size_t> pairable_items_;
  std::vector<std::vector<std::size_t>> class_pairable_items_;
  std::vector<std::vector<std::size_t>> class_pairable_records_;
  std::vector<std::vector<std::size_t>> item_pairable_records_;
};

/// Owns the sampling RNG. Copying a sampler copies its RNG state, so a copy
/// replays the same stream.
class Sampler {
 public:
  /// Throws ConfigError when B < 2, p outside [0,1], or fewer than B pairable
  /// items are available.
  Sampler(const Dataset& ds, SamplerConfig cfg, PairMode mode);

  const SamplerConfig& config() const { return cfg_; }
  const PairIndex& pair_index() const { return index_; }
  Rng& rng() { return rng_; }

  /// Within-class with probability p, otherwise B anchors from distinct
  /// items drawn uniformly from all pairable records.
  Minibatch sample();

  /// B anchors from distinct pairable items of one class. When the class has
  /// fewer than B pairable items, items are drawn with replacement and the
  /// fallback counter is incremented.
  Minibatch within_class(std::size_t cls);

  /// Class chosen with probability proportional to its pairable item count.
  std::size_t class_for_batch();

  std::size_t fallback_count() const { return fallbacks_; }

 private:
  std::size_t draw_positive(std::size_t anchor);

  const Dataset* ds_;
  SamplerConfig cfg_;
  PairIndex index_;
  Rng rng_;
  std::size_t fallbacks_ = 0;
};

}  // namespace tripletsearch
