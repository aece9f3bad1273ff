#include "divnet/instance.hpp"

#include <numeric>

#include "divnet/errors.hpp"

namespace divnet {

void RankingInstance::validate() const {
  const std::string where = "instance '" + query_id + "': ";
  if (num_items == 0) throw ConfigError(where + "no items");
  if (item_features.size() != num_items * item_dim)
    throw ConfigError(where + "feature matrix is not num_items x item_dim");
  if (grades.size() != num_items || clicks.size() != num_items)
    throw ConfigError(where + "grades/clicks length differs from item count");
  for (std::size_t i = 0; i < num_items; ++i) {
    if (grades[i] < 0 || grades[i] > 4) throw ConfigError(where + "grade outside 0..4");
    if (clicks[i] != 0 && clicks[i] != 1) throw ConfigError(where + "click label not 0/1");
  }
  if (!categorical.empty()) {
    if (categorical.size() != num_items) throw ConfigError(where + "categorical rows != items");
    for (const auto& row : categorical)
      if (row.size() != categorical.front().size())
        throw ConfigError(where + "ragged categorical codes");
  }
  if (!is_permutation(display_order, num_items))
    throw ConfigError(where + "display_order is not a permutation");
}

int binarize_grade(int grade) { return grade >= 3 ? 1 : 0; }

bool is_permutation(std::span<const std::size_t> order, std::size_t n) {
  if (order.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (auto i : order) {
    if (i >= n || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

Permutation identity_permutation(std::size_t n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

RankingInstance truncate_items(const RankingInstance& inst, std::span<const std::size_t> order,
                               std::size_t count) {
  if (count > order.size()) count = order.size();
  RankingInstance out;
  out.query_id = inst.query_id;
  out.num_items = count;
  out.item_dim = inst.item_dim;
  out.user_features = inst.user_features;
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t i = order[t];
    if (i >= inst.num_items) throw ContractViolation("reorder: index out of range");
    auto row = inst.item_row(i);
    out.item_features.insert(out.item_features.end(), row.begin(), row.end());
    if (!inst.categorical.empty()) out.categorical.push_back(inst.categorical[i]);
    out.grades.push_back(inst.grades[i]);
    out.clicks.push_back(inst.clicks[i]);
  }
  out.display_order = identity_permutation(count);
  return out;
}

RankingInstance reorder_items(const RankingInstance& inst, std::span<const std::size_t> order) {
  if (!is_permutation(order, inst.num_items))
    throw ContractViolation("reorder_items: order is not a permutation");
  return truncate_items(inst, order, order.size());
}

}  // namespace divnet
