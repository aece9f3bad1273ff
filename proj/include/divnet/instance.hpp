#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace divnet {

// Ordering of item indices; position t holds the item shown at slot t.
using Permutation = std::vector<std::size_t>;

// One query/slate as delivered by the upstream ranker. Rows are stored in the
// logged display order, so display_order is the identity permutation unless
// a caller reorders the rows afterwards.
struct RankingInstance {
  std::string query_id;
  std::size_t num_items = 0;
  std::size_t item_dim = 0;
  std::vector<double> item_features;  // num_items × item_dim, row-major
  // Optional integer codes, one vector per item, all of equal length.
  std::vector<std::vector<std::int64_t>> categorical;
  std::vector<double> user_features;
  std::vector<int> grades;  // 0..4
  std::vector<int> clicks;  // 0/1
  Permutation display_order;

  std::span<const double> item_row(std::size_t i) const {
    return {item_features.data() + i * item_dim, item_dim};
  }
  std::size_t categorical_fields() const {
    return categorical.empty() ? 0 : categorical.front().size();
  }

  // Throws ConfigError describing the first broken invariant.
  void validate() const;
};

// Grades 0-2 are negative, 3-4 positive.
int binarize_grade(int grade);

bool is_permutation(std::span<const std::size_t> order, std::size_t n);

Permutation identity_permutation(std::size_t n);

// The instance with its rows rearranged so that new row t is old row order[t].
RankingInstance reorder_items(const RankingInstance& inst, std::span<const std::size_t> order);

// Keeps the first `count` rows in the given order.
RankingInstance truncate_items(const RankingInstance& inst, std::span<const std::size_t> order,
                               std::size_t count);

}  // namespace divnet
