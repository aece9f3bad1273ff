#pragma once

// Click simulator with planted item interactions. Each item has a category
// and an attractiveness a. Shown at slot t (from 1) after m earlier items of
// its category, it is clicked with probability a · d_t · β^m, where
// d_t = 1/log2(t+1).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "divnet/instance.hpp"

namespace divnet {

struct SyntheticConfig {
  std::size_t num_items = 10;
  std::size_t num_categories = 5;
  double attractiveness_min = 0.1;
  double attractiveness_max = 0.9;
  double beta = 0.5;
  double category_signal = 1.0;  // height of the category one-hot block
  double noise = 0.05;           // std-dev of Gaussian feature noise
  std::uint64_t seed = 0;

  void validate() const;
  // Item rows: num_categories one-hot columns, then the attractiveness.
  std::size_t feature_width() const { return num_categories + 1; }
};

struct SyntheticItem {
  std::size_t category = 0;
  double attractiveness = 0.0;
};

struct SyntheticQuery {
  std::string query_id;
  double beta = 1.0;
  std::vector<SyntheticItem> items;  // same order as the instance rows
};

struct SyntheticDataset {
  SyntheticConfig config;
  std::vector<RankingInstance> instances;
  std::vector<SyntheticQuery> metadata;
};

double position_discount(std::size_t slot);  // slot counts from 1

// Rows are stored in the logged display order; clicks are drawn along it.
SyntheticDataset generate_synthetic(const SyntheticConfig& config, std::size_t num_queries);

double expected_clicks(const SyntheticQuery& query, std::span<const std::size_t> order);

struct OracleSlate {
  Permutation permutation;
  double expected_clicks = 0.0;
};

inline constexpr std::size_t kMaxOracleItems = 10;

// Exhaustive search over all orders; the first maximum in lexicographic
// order wins. Refuses queries with more than kMaxOracleItems items.
OracleSlate oracle_optimal_slate(const SyntheticQuery& query);

// CSV sidecar: query_id,item,category,attractiveness,beta.
void write_synthetic_metadata(std::ostream& out, std::span<const SyntheticQuery> metadata);
std::vector<SyntheticQuery> read_synthetic_metadata(std::istream& in);

}  // namespace divnet
