#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tripletsearch/embedding.hpp"

namespace tripletsearch {

enum class Domain { None, Query, Catalog };

std::string to_string(Domain d);
Domain parse_domain(const std::string& s);

struct FeatureRecord {
  std::string image_id;
  std::string item_id;
  std::string class_id;
  Domain domain = Domain::None;
  Vector features;

  bool operator==(const FeatureRecord&) const = default;
};

/// Immutable labeled feature set. Items and classes are numbered in order of
/// first appearance, which fixes every iteration order downstream.
class Dataset {
 public:
  /// Validates (unique image ids, constant finite dims) and builds indices.
  Dataset(std::vector<FeatureRecord> records, std::size_t input_dim);

  std::size_t size() const { return records_.size(); }
  std::size_t input_dim() const { return input_dim_; }
  const std::vector<FeatureRecord>& records() const { return records_; }
  const FeatureRecord& record(std::size_t i) const { return records_[i]; }

  std::size_t item_count() const { return item_names_.size(); }
  std::size_t class_count() const { return class_names_.size(); }
  const std::string& item_name(std::size_t item) const { return item_names_[item]; }
  const std::string& class_name(std::size_t cls) const { return class_names_[cls]; }
  const std::vector<std::string>& class_names() const { return class_names_; }

  std::size_t item_of(std::size_t record) const { return record_item_[record]; }
  std::size_t class_of(std::size_t record) const { return record_class_[record]; }
  std::size_t class_of_item(std::size_t item) const { return item_class_[item]; }

  /// Record indices of an item, ascending.
  const std::vector<std::size_t>& records_of_item(std::size_t item) const {
    return item_records_[item];
  }
  /// Item indices of a class, ascending.
  const std::vector<std::size_t>& items_of_class(std::size_t cls) const {
    return class_items_[cls];
  }

  std::optional<std::size_t> find_item(const std::string& item_id) const;
  std::optional<std::size_t> find_class(const std::string& class_id) const;

  bool has_domain(Domain d) const;

  bool operator==(const Dataset& other) const { return records_ == other.records_; }

 private:
  std::vector<FeatureRecord> records_;
  std::size_t input_dim_;
  std::vector<std::string> item_names_;
  std::vector<std::string> class_names_;
  std::unordered_map<std::string, std::size_t> item_lookup_;
  std::unordered_map<std::string, std::size_t> class_lookup_;
  std::vector<std::size_t> record_item_;
  std::vector<std::size_t> record_class_;
  std::vector<std::size_t> item_class_;
  std::vector<std::vector<std::size_t>> item_records_;
  std::vector<std::vector<std::size_t>> class_items_;
};

/// CSV: header `image_id,item_id,class_id,domain,f0,...,f{d-1}`.
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& ds, std::ostream& out);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

enum class PairMode { AllPairs, CrossDomainOnly };

std::string to_string(PairMode mode);
PairMode parse_pair_mode(const std::string& s);

/// Throws ConfigError when CrossDomainOnly is requested on a dataset that
/// lacks either the query or the catalog domain.
void validate_pair_mode(const Dataset& ds, PairMode mode);

/// Same-item records other than the anchor, ascending. CrossDomainOnly also
/// requires the opposite domain. Empty means the anchor is unpairable.
std::vector<std::size_t> positive_candidates(const Dataset& ds, std::size_t anchor, PairMode mode);

struct SynthConfig {
  std::size_t n_classes = 10;
  std::size_t items_per_class = 100;
  std::size_t images_per_item = 3;
  std::size_t dim = 16;
  double class_spread = 10.0;
  double item_spread = 3.0;
  double image_noise = 1.0;
  /// Extra coordinates carrying only per-image noise of scale nuisance_noise.
  std::size_t nuisance_dim = 0;
  double nuisance_noise = 0.0;
  bool two_domain = false;
  std::uint64_t seed = 0;

  bool operator==(const SynthConfig&) const = default;
};

/// Throws ConfigError. `for_training` additionally requires images_per_item >= 2.
void validate(const SynthConfig& cfg, bool for_training = false);

/// Named presets: "sop-like" (well-separated classes) and "df-like"
/// (overlapping classes, two domains).
SynthConfig synth_preset(const std::string& name);
std::vector<std::string> synth_preset_names();

/// Hierarchical Gaussian sampling: class centres, item centres around them,
/// images around item centres. Deterministic in cfg.seed.
Dataset generate_synthetic(const SynthConfig& cfg);

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// Item-disjoint split: within every class, round(fraction * items) randomly
/// chosen items (at least one, and at least one left for training when the
/// class has two or more) go to the test side.
DatasetSplit split_by_item(const Dataset& ds, double test_fraction, std::uint64_t seed);

}  // namespace tripletsearch
