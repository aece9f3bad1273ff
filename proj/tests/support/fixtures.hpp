#pragma once

#include <string>

#include "divnet/instance.hpp"
#include "divnet/model.hpp"
#include "divnet/rng.hpp"

namespace divnet::check {

// Gaussian features, Bernoulli(0.3) clicks, grades 4/0, logged identity order.
inline RankingInstance random_instance(std::size_t n, std::size_t item_dim, std::size_t user_dim,
                                       std::uint64_t seed) {
  Rng rng(seed);
  RankingInstance inst;
  inst.query_id = "q" + std::to_string(seed);
  inst.num_items = n;
  inst.item_dim = item_dim;
  for (std::size_t i = 0; i < n * item_dim; ++i) inst.item_features.push_back(rng.normal());
  for (std::size_t i = 0; i < user_dim; ++i) inst.user_features.push_back(rng.normal());
  for (std::size_t i = 0; i < n; ++i) {
    const int click = rng.uniform() < 0.3 ? 1 : 0;
    inst.clicks.push_back(click);
    inst.grades.push_back(click ? 4 : 0);
  }
  inst.display_order = identity_permutation(n);
  return inst;
}

inline ModelConfig small_model(std::size_t item_dim, std::size_t user_dim, std::size_t dims = 8) {
  ModelConfig c;
  c.item_dim = item_dim;
  c.user_dim = user_dim;
  c.key_dim = dims;
  c.value_dim = dims;
  return c;
}

}  // namespace divnet::check
