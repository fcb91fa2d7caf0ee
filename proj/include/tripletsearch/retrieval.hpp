#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tripletsearch/dataset.hpp"
#include "tripletsearch/embedding.hpp"

namespace tripletsearch {

/// CrossDomain: query-domain records search catalog-domain records.
/// SinglePool: every record searches all others (itself excluded).
enum class EvalProtocol { CrossDomain, SinglePool };

std::string to_string(EvalProtocol p);
EvalProtocol parse_eval_protocol(const std::string& s);
void validate_protocol(const Dataset& ds, EvalProtocol protocol);

std::vector<std::size_t> catalog_records(const Dataset& ds, EvalProtocol protocol);
std::vector<std::size_t> query_records(const Dataset& ds, EvalProtocol protocol);

/// Embedded catalog rows, aligned with ascending record indices.
struct RetrievalIndex {
  Matrix embeddings;
  std::vector<std::size_t> refs;
  std::vector<double> norms;

  std::size_t size() const { return refs.size(); }
  bool operator==(const RetrievalIndex&) const = default;
};

RetrievalIndex build_index(const EmbeddingModel& model, const Dataset& ds, EvalProtocol protocol);

struct Hit {
  std::size_t record;
  double similarity;

  bool operator==(const Hit&) const = default;
};

/// Exact top-k by cosine similarity, descending; ties by ascending record index.
std::vector<Hit> retrieve_topk(const RetrievalIndex& index, std::span<const double> query,
                               std::size_t k, std::optional<std::size_t> exclude = std::nullopt);

inline const std::vector<std::size_t> kDefaultKList = {1, 5, 10, 20, 30, 40, 50};

struct EvalReport {
  /// (k, recall) with k ascending.
  std::vector<std::pair<std::size_t, double>> recall_at_k;
  std::vector<std::string> classes;
  /// confusion[true][predicted], indexed like `classes`.
  std::vector<std::vector<std::size_t>> confusion;
  double overall_first_retrieval_accuracy = 0.0;
  std::size_t n_queries = 0;
  /// Queries with no same-item record in the catalog.
  std::size_t excluded_queries = 0;
  /// Queries whose rank-1 similarity is tied between a correct and a wrong item.
  std::size_t rank1_ties = 0;

  double recall(std::size_t k) const;
  bool operator==(const EvalReport&) const = default;
};

/// Full evaluation: recall@k for every k in k_list plus the rank-1 confusion
/// matrix. Throws UsageError when no query is eligible.
EvalReport evaluate(const EmbeddingModel& model, const Dataset& ds, EvalProtocol protocol,
                    std::span<const std::size_t> k_list = kDefaultKList);

EvalReport recall_at_k(const EmbeddingModel& model, const Dataset& ds, EvalProtocol protocol,
                       std::span<const std::size_t> k_list);
EvalReport confusion_matrix(const EmbeddingModel& model, const Dataset& ds, EvalProtocol protocol);

nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& doc);
/// `k,recall` rows.
void write_recall_csv(const EvalReport& report, std::ostream& out);
/// `true_class,pred_class,count` rows, every class pair.
void write_confusion_csv(const EvalReport& report, std::ostream& out);

}  // namespace tripletsearch
