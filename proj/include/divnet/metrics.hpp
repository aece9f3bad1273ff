#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "divnet/instance.hpp"
#include "json.hpp"

namespace divnet {

// All metrics take labels already arranged in ranked order. Cutoffs must be
// at least 1; a cutoff past the list end uses the whole list.

// DCG/IDCG with gains 2^rel - 1 and log2(i+1) discounts; 0 when IDCG is 0.
double ndcg_at_k(std::span<const int> ranked_labels, std::size_t k);

// Clicked fraction of the top k (denominator k even for shorter lists).
double precision_at_k(std::span<const int> ranked_labels, std::size_t k);

// (Σ_{i≤k} Pre@i · label_i) / k. The denominator is k, not the number of
// clicked items.
double map_at_k(std::span<const int> ranked_labels, std::size_t k);

// Mean of (1 - cosine) over pairs of raw feature rows among the top k.
double intra_list_distance(const RankingInstance& inst, std::span<const std::size_t> order,
                           std::size_t k);

std::vector<int> labels_in_order(std::span<const int> labels, std::span<const std::size_t> order);

struct MetricSummary {
  std::string name;  // ndcg, precision, map, ild
  std::size_t cutoff = 0;
  double mean = 0.0;
  std::size_t queries = 0;
};

struct QueryBreakdown {
  std::string query_id;
  bool zero_positives = false;
  std::vector<double> values;  // same order as EvalReport::metrics
};

struct EvalReport {
  std::string method;
  std::vector<MetricSummary> metrics;
  std::vector<QueryBreakdown> per_query;

  // Throws std::out_of_range when the metric was not computed.
  double value(const std::string& name, std::size_t cutoff) const;
  std::string to_csv() const;
  // Table-style document: {"method": ..., "queries": n, "metrics": {"NDCG@10": ...}}.
  nlohmann::json to_json() const;
};

using Ranker = std::function<Permutation(const RankingInstance&)>;

struct EvalOptions {
  std::vector<std::size_t> cutoffs{1, 3, 5, 10};
  bool graded = false;        // NDCG on 0-4 grades instead of binary clicks
  bool include_ild = true;    // intra-list distance at cutoffs >= 2
  bool per_query = false;
  std::size_t threads = 1;
};

// Ranks every instance and averages each metric over all queries, including
// those without positives (which score 0 and are flagged in the breakdown).
// Aggregation is independent of instance order.
EvalReport evaluate(const Ranker& ranker, std::span<const RankingInstance> instances,
                    const EvalOptions& options, const std::string& method = "");

}  // namespace divnet
