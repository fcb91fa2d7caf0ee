#include "tripletsearch/retrieval.hpp"

#include <algorithm>
#include <ostream>

#include "tripletsearch/errors.hpp"

namespace tripletsearch {

std::string to_string(EvalProtocol p) {
  return p == EvalProtocol::CrossDomain ? "cross" : "single";
}

EvalProtocol parse_eval_protocol(const std::string& s) {
  if (s == "cross" || s == "CrossDomain") return EvalProtocol::CrossDomain;
  if (s == "single" || s == "SinglePool") return EvalProtocol::SinglePool;
  throw UsageError("unknown protocol '" + s + "' (expected cross or single)");
}

void validate_protocol(const Dataset& ds, EvalProtocol protocol) {
  if (protocol == EvalProtocol::CrossDomain &&
      !(ds.has_domain(Domain::Query) && ds.has_domain(Domain::Catalog)))
    throw ConfigError("protocol 'cross' needs both query and catalog records in the dataset");
}

namespace {

std::vector<std::size_t> records_where(const Dataset& ds, EvalProtocol protocol, Domain d) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < ds.size(); ++r)
    if (protocol == EvalProtocol::SinglePool || ds.record(r).domain == d) out.push_back(r);
  return out;
}

bool ranks_before(const Hit& a, const Hit& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.record < b.record;
}

}  // namespace

std::vector<std::size_t> catalog_records(const Dataset& ds, EvalProtocol protocol) {
  return records_where(ds, protocol, Domain::Catalog);
}

std::vector<std::size_t> query_records(const Dataset& ds, EvalProtocol protocol) {
  return records_where(ds, protocol, Domain::Query);
}

RetrievalIndex build_index(const EmbeddingModel& model, const Dataset& ds, EvalProtocol protocol) {
  validate_protocol(ds, protocol);
  RetrievalIndex index;
  index.refs = catalog_records(ds, protocol);
  index.embeddings = Matrix(index.refs.size(), model.output_dim());
  index.norms.resize(index.refs.size());
  for (std::size_t i = 0; i < index.refs.size(); ++i) {
    const auto& rec = ds.record(index.refs[i]);
    const Vector e = model.forward(rec.features);
    const double n = l2_norm(e);
    if (!(n > kNormEpsilon))
      throw DegenerateInputError("embedding of record '" + rec.image_id + "' has near-zero norm");
    std::copy(e.begin(), e.end(), index.embeddings.row(i).begin());
    index.norms[i] = n;
  }
  return index;
}

std::vector<Hit> retrieve_topk(const RetrievalIndex& index, std::span<const double> query,
                               std::size_t k, std::optional<std::size_t> exclude) {
  if (k == 0) throw UsageError("retrieve_topk: k must be at least 1");
  if (query.size() != index.embeddings.cols)
    throw UsageError("retrieve_topk: query dimension mismatch");
  const double qn = l2_norm(query);
  if (!(qn > kNormEpsilon)) throw DegenerateInputError("retrieve_topk: query has near-zero norm");

  std::vector<Hit> hits;
  hits.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (exclude && index.refs[i] == *exclude) continue;
    const double s = std::clamp(dot(query, index.embeddings.row(i)) / (qn * index.norms[i]), -1.0, 1.0);
    hits.push_back({index.refs[i], s});
  }
  const std::size_t n = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(),
                    ranks_before);
  hits.resize(n);
  return hits;
}

double EvalReport::recall(std::size_t k) const {
  for (const auto& [kk, r] : recall_at_k)
    if (kk == k) return r;
  throw UsageError("recall@" + std::to_string(k) + " was not evaluated");
}

EvalReport evaluate(const EmbeddingModel& model, const Dataset& ds, EvalProtocol protocol,
                    std::span<const std::size_t> k_list) {
  std::vector<std::size_t> ks(k_list.begin(), k_list.end());
  if (ks.empty()) throw UsageError("k list must not be empty");
  if (std::find(ks.begin(), ks.end(), std::size_t{0}) != ks.end())
    throw UsageError("every k must be at least 1");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  const RetrievalIndex index = build_index(model, ds, protocol);
  const bool single = protocol == EvalProtocol::SinglePool;

  // Catalog rows per item, to decide query eligibility.
  std::vector<std::size_t> catalog_per_item(ds.item_count(), 0);
  for (std::size_t r : index.refs) ++catalog_per_item[ds.item_of(r)];

  EvalReport report;
  report.classes = ds.class_names();
  report.confusion.assign(ds.class_count(), std::vector<std::size_t>(ds.class_count(), 0));
  std::vector<std::size_t> successes(ks.size(), 0);
  const std::size_t max_k = ks.back();

  for (std::size_t q : query_records(ds, protocol)) {
    const std::size_t item = ds.item_of(q);
    const std::size_t same_item = catalog_per_item[item] - (single ? 1 : 0);
    if (same_item == 0) {
      ++report.excluded_queries;
      continue;
    }
    const Vector e = model.forward(ds.record(q).features);
    if (!(l2_norm(e) > kNormEpsilon))
      throw DegenerateInputError("embedding of query '" + ds.record(q).image_id +
                                 "' has near-zero norm");
    const auto hits = retrieve_topk(index, e, max_k, single ? std::optional(q) : std::nullopt);
    ++report.n_queries;

    std::size_t first_match = hits.size();
    for (std::size_t rank = 0; rank < hits.size(); ++rank)
      if (ds.item_of(hits[rank].record) == item) {
        first_match = rank;
        break;
      }
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (first_match < ks[i]) ++successes[i];

    if (!hits.empty()) {
      ++report.confusion[ds.class_of(q)][ds.class_of(hits[0].record)];
      if (hits.size() > 1 && hits[0].similarity == hits[1].similarity &&
          (ds.item_of(hits[0].record) == item) != (ds.item_of(hits[1].record) == item))
        ++report.rank1_ties;
    }
  }
  if (report.n_queries == 0)
    throw UsageError("no eligible queries: no query has a same-item record in the catalog");

  const auto n = static_cast<double>(report.n_queries);
  for (std::size_t i = 0; i < ks.size(); ++i)
    report.recall_at_k.emplace_back(ks[i], static_cast<double>(successes[i]) / n);
  std::size_t trace = 0;
  for (std::size_t c = 0; c < report.confusion.size(); ++c) trace += report.confusion[c][c];
  report.overall_first_retrieval_accuracy = static_cast<double>(trace) / n;
  return report;
}

EvalReport recall_at_k(const EmbeddingModel& model, const Dataset& ds, EvalProtocol protocol,
                       std::span<const std::size_t> k_list) {
  return evaluate(model, ds, protocol, k_list);
}

EvalReport confusion_matrix(const EmbeddingModel& model, const Dataset& ds, EvalProtocol protocol) {
  static constexpr std::size_t kRankOne[] = {1};
  return evaluate(model, ds, protocol, kRankOne);
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [k, r] : report.recall_at_k) recall[std::to_string(k)] = r;
  doc["recall_at_k"] = std::move(recall);
  doc["confusion"] = {{"classes", report.classes}, {"counts", report.confusion}};
  doc["overall_first_retrieval_accuracy"] = report.overall_first_retrieval_accuracy;
  doc["n_queries"] = report.n_queries;
  doc["excluded_queries"] = report.excluded_queries;
  doc["rank1_ties"] = report.rank1_ties;
  return doc;
}

EvalReport eval_report_from_json(const nlohmann::json& doc) {
  EvalReport report;
  std::vector<std::pair<std::size_t, double>> recall;
  for (const auto& [key, value] : doc.at("recall_at_k").items())
    recall.emplace_back(std::stoul(key), value.get<double>());
  std::sort(recall.begin(), recall.end());
  report.recall_at_k = std::move(recall);
  report.classes = doc.at("confusion").at("classes").get<std::vector<std::string>>();
  report.confusion = doc.at("confusion").at("counts").get<std::vector<std::vector<std::size_t>>>();
  report.overall_first_retrieval_accuracy = doc.at("overall_first_retrieval_accuracy").get<double>();
  report.n_queries = doc.at("n_queries").get<std::size_t>();
  report.excluded_queries = doc.value("excluded_queries", std::size_t{0});
  report.rank1_ties = doc.value("rank1_ties", std::size_t{0});
  return report;
}

void write_recall_csv(const EvalReport& report, std::ostream& out) {
  out << "k,recall\n";
  for (const auto& [k, r] : report.recall_at_k) out << k << ',' << nlohmann::json(r).dump() << '\n';
}

void write_confusion_csv(const EvalReport& report, std::ostream& out) {
  out << "true_class,pred_class,count\n";
  for (std::size_t t = 0; t < report.classes.size(); ++t)
    for (std::size_t p = 0; p < report.classes.size(); ++p)
      out << report.classes[t] << ',' << report.classes[p] << ',' << report.confusion[t][p] << '\n';
}

}  // namespace tripletsearch
