#include "tripletsearch/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>

#include "tripletsearch/errors.hpp"
#include "tripletsearch/random.hpp"

namespace tripletsearch {

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

void check_identifier(const std::string& s, const char* what) {
  if (s.empty()) throw UsageError(std::string(what) + " must not be empty");
  if (s.find_first_of(",\"\r\n") != std::string::npos)
    throw UsageError(std::string(what) + " '" + s + "' contains a CSV metacharacter");
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

std::string to_string(Domain d) {
  switch (d) {
    case Domain::Query: return "query";
    case Domain::Catalog: return "catalog";
    case Domain::None: break;
  }
  return "none";
}

Domain parse_domain(const std::string& s) {
  if (s == "query") return Domain::Query;
  if (s == "catalog") return Domain::Catalog;
  if (s == "none") return Domain::None;
  throw UsageError("unknown domain '" + s + "' (expected query, catalog or none)");
}

Dataset::Dataset(std::vector<FeatureRecord> records, std::size_t input_dim)
    : records_(std::move(records)), input_dim_(input_dim) {
  if (input_dim_ == 0) throw UsageError("dataset input_dim must be positive");
  std::unordered_map<std::string, std::size_t> seen_images;
  seen_images.reserve(records_.size());
  record_item_.reserve(records_.size());
  record_class_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    check_identifier(r.image_id, "image_id");
    check_identifier(r.item_id, "item_id");
    check_identifier(r.class_id, "class_id");
    if (!seen_images.emplace(r.image_id, i).second) throw DuplicateIdError(r.image_id);
    if (r.features.size() != input_dim_)
      throw UsageError("record '" + r.image_id + "' has dim " + std::to_string(r.features.size()) +
                       ", expected " + std::to_string(input_dim_));
    if (!all_finite(r.features))
      throw UsageError("record '" + r.image_id + "' has non-finite features");

    auto [cit, cnew] = class_lookup_.emplace(r.class_id, class_names_.size());
    if (cnew) {
      class_names_.push_back(r.class_id);
      class_items_.emplace_back();
    }
    auto [iit, inew] = item_lookup_.emplace(r.item_id, item_names_.size());
    if (inew) {
      item_names_.push_back(r.item_id);
      item_records_.emplace_back();
      item_class_.push_back(cit->second);
      class_items_[cit->second].push_back(iit->second);
    } else if (item_class_[iit->second] != cit->second) {
      throw UsageError("item '" + r.item_id + "' appears under more than one class_id");
    }
    item_records_[iit->second].push_back(i);
    record_item_.push_back(iit->second);
    record_class_.push_back(cit->second);
  }
}

std::optional<std::size_t> Dataset::find_item(const std::string& item_id) const {
  auto it = item_lookup_.find(item_id);
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Dataset::find_class(const std::string& class_id) const {
  auto it = class_lookup_.find(class_id);
  if (it == class_lookup_.end()) return std::nullopt;
  return it->second;
}

bool Dataset::has_domain(Domain d) const {
  return std::any_of(records_.begin(), records_.end(),
                     [d](const FeatureRecord& r) { return r.domain == d; });
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  static constexpr std::string_view kFixed[] = {"image_id", "item_id", "class_id", "domain"};
  if (header.size() < 5) throw ParseError("header needs image_id,item_id,class_id,domain,f0,...", 1);
  for (std::size_t i = 0; i < 4; ++i)
    if (header[i] != kFixed[i])
      throw ParseError("header column " + std::to_string(i + 1) + " must be '" +
                           std::string(kFixed[i]) + "'",
                       1);
  const std::size_t dim = header.size() - 4;
  for (std::size_t j = 0; j < dim; ++j)
    if (header[4 + j] != "f" + std::to_string(j))
      throw ParseError("feature column " + std::to_string(j) + " must be named 'f" +
                           std::to_string(j) + "'",
                       1);

  std::vector<FeatureRecord> records;
  std::unordered_map<std::string, std::size_t> first_seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ParseError("row has dim " + std::to_string(fields.size() >= 4 ? fields.size() - 4 : 0) +
                           " but header declares " + std::to_string(dim),
                       line_no);
    FeatureRecord r;
    r.image_id = std::string(fields[0]);
    r.item_id = std::string(fields[1]);
    r.class_id = std::string(fields[2]);
    if (r.image_id.empty() || r.item_id.empty() || r.class_id.empty())
      throw ParseError("empty identifier field", line_no);
    if (!first_seen.emplace(r.image_id, line_no).second) throw DuplicateIdError(r.image_id);
    try {
      r.domain = parse_domain(std::string(fields[3]));
    } catch (const UsageError& e) {
      throw ParseError(e.what(), line_no);
    }
    r.features.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      const auto f = fields[4 + j];
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size())
        throw ParseError("feature f" + std::to_string(j) + " is not a number: '" + std::string(f) + "'",
                         line_no);
      if (!std::isfinite(v))
        throw ParseError("feature f" + std::to_string(j) + " is not finite", line_no);
      r.features[j] = v;
    }
    records.push_back(std::move(r));
  }
  try {
    return Dataset(std::move(records), dim);
  } catch (const UsageError& e) {
    throw ParseError(e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset '" + path.string() + "'");
  return read_dataset(in);
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  std::string buf = "image_id,item_id,class_id,domain";
  for (std::size_t j = 0; j < ds.input_dim(); ++j) buf += ",f" + std::to_string(j);
  buf += '\n';
  out << buf;
  for (const auto& r : ds.records()) {
    buf.clear();
    buf += r.image_id;
    buf += ',';
    buf += r.item_id;
    buf += ',';
    buf += r.class_id;
    buf += ',';
    buf += to_string(r.domain);
    for (double v : r.features) {
      buf += ',';
      append_double(buf, v);
    }
    buf += '\n';
    out << buf;
  }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_dataset(ds, out);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string to_string(PairMode mode) {
  return mode == PairMode::AllPairs ? "all" : "cross";
}

PairMode parse_pair_mode(const std::string& s) {
  if (s == "all" || s == "AllPairs") return PairMode::AllPairs;
  if (s == "cross" || s == "CrossDomainOnly") return PairMode::CrossDomainOnly;
  throw UsageError("unknown pair mode '" + s + "' (expected all or cross)");
}

void validate_pair_mode(const Dataset& ds, PairMode mode) {
  if (mode == PairMode::CrossDomainOnly &&
      !(ds.has_domain(Domain::Query) && ds.has_domain(Domain::Catalog)))
    throw ConfigError("pair mode 'cross' needs both query and catalog records in the dataset");
}

std::vector<std::size_t> positive_candidates(const Dataset& ds, std::size_t anchor, PairMode mode) {
  if (anchor >= ds.size()) throw UsageError("positive_candidates: anchor index out of range");
  const auto anchor_domain = ds.record(anchor).domain;
  std::vector<std::size_t> out;
  for (std::size_t r : ds.records_of_item(ds.item_of(anchor))) {
    if (r == anchor) continue;
    if (mode == PairMode::CrossDomainOnly) {
      const auto d = ds.record(r).domain;
      const bool crosses = (anchor_domain == Domain::Query && d == Domain::Catalog) ||
                           (anchor_domain == Domain::Catalog && d == Domain::Query);
      if (!crosses) continue;
    }
    out.push_back(r);
  }
  return out;
}

void validate(const SynthConfig& cfg, bool for_training) {
  if (cfg.n_classes == 0 || cfg.items_per_class == 0 || cfg.images_per_item == 0 || cfg.dim == 0)
    throw ConfigError("synthetic counts and dim must be positive");
  if (!(cfg.class_spread > 0.0) || !(cfg.item_spread > 0.0) || !(cfg.image_noise > 0.0))
    throw ConfigError("class_spread, item_spread and image_noise must be > 0");
  if (cfg.nuisance_dim > 0 && !(cfg.nuisance_noise > 0.0))
    throw ConfigError("nuisance_noise must be > 0 when nuisance_dim > 0");
  if (!std::isfinite(cfg.class_spread) || !std::isfinite(cfg.item_spread) ||
      !std::isfinite(cfg.image_noise) || !std::isfinite(cfg.nuisance_noise))
    throw ConfigError("synthetic spreads must be finite");
  if (for_training && cfg.images_per_item < 2)
    throw ConfigError("images_per_item must be >= 2 to form anchor-positive pairs");
}

std::vector<std::string> synth_preset_names() { return {"sop-like", "df-like"}; }

SynthConfig synth_preset(const std::string& name) {
  // Shared shape: 16 informative coordinates plus 48 per-image nuisance
  // coordinates that raw-feature retrieval cannot ignore but a trained
  // projection can.
  SynthConfig cfg;
  cfg.n_classes = 10;
  cfg.items_per_class = 200;
  cfg.dim = 16;
  cfg.nuisance_dim = 48;
  cfg.nuisance_noise = 3.0;
  cfg.image_noise = 1.0;
  cfg.item_spread = 3.0;
  if (name == "sop-like") {
    cfg.class_spread = 10.0;
    cfg.images_per_item = 3;
    return cfg;
  }
  if (name == "df-like") {
    cfg.class_spread = 3.0;
    cfg.images_per_item = 4;
    cfg.two_domain = true;
    return cfg;
  }
  throw ConfigError("unknown preset '" + name + "' (expected sop-like or df-like)");
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng = make_rng(cfg.seed, rng_stream::kSynthetic);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t total_dim = cfg.dim + cfg.nuisance_dim;

  std::vector<Vector> class_centers(cfg.n_classes, Vector(cfg.dim));
  for (auto& c : class_centers)
    for (double& v : c) v = cfg.class_spread * normal(rng);

  std::vector<FeatureRecord> records;
  records.reserve(cfg.n_classes * cfg.items_per_class * cfg.images_per_item);
  Vector item_center(cfg.dim);
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    const std::string class_id = "class" + std::to_string(c);
    for (std::size_t i = 0; i < cfg.items_per_class; ++i) {
      const std::string item_id = class_id + "_item" + std::to_string(i);
      for (std::size_t j = 0; j < cfg.dim; ++j)
        item_center[j] = class_centers[c][j] + cfg.item_spread * normal(rng);
      for (std::size_t k = 0; k < cfg.images_per_item; ++k) {
        FeatureRecord r;
        r.image_id = item_id + "_img" + std::to_string(k);
        r.item_id = item_id;
        r.class_id = class_id;
        r.domain = cfg.two_domain ? (k % 2 == 0 ? Domain::Catalog : Domain::Query) : Domain::None;
        r.features.resize(total_dim);
        for (std::size_t j = 0; j < cfg.dim; ++j)
          r.features[j] = item_center[j] + cfg.image_noise * normal(rng);
        for (std::size_t j = cfg.dim; j < total_dim; ++j)
          r.features[j] = cfg.nuisance_noise * normal(rng);
        records.push_back(std::move(r));
      }
    }
  }
  return Dataset(std::move(records), total_dim);
}

DatasetSplit split_by_item(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test fraction must lie strictly between 0 and 1");
  Rng rng = make_rng(seed, rng_stream::kSplit);
  std::vector<bool> is_test(ds.item_count(), false);
  for (std::size_t c = 0; c < ds.class_count(); ++c) {
    auto items = ds.items_of_class(c);
    std::shuffle(items.begin(), items.end(), rng);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * items.size()));
    n_test = std::max<std::size_t>(n_test, 1);
    if (items.size() >= 2) n_test = std::min(n_test, items.size() - 1);
    for (std::size_t i = 0; i < n_test; ++i) is_test[items[i]] = true;
  }
  std::vector<FeatureRecord> train, test;
  for (std::size_t r = 0; r < ds.size(); ++r)
    (is_test[ds.item_of(r)] ? test : train).push_back(ds.record(r));
  return {Dataset(std::move(train), ds.input_dim()), Dataset(std::move(test), ds.input_dim())};
}

}  // namespace tripletsearch
