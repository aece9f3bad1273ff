#include "divnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "divnet/errors.hpp"
#include "divnet/rng.hpp"

namespace divnet {

void SyntheticConfig::validate() const {
  if (num_items < 1) throw ConfigError("synthetic: num_items must be >= 1");
  if (num_categories < 1) throw ConfigError("synthetic: num_categories must be >= 1");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("synthetic: beta must lie in (0, 1]");
  if (!(attractiveness_min >= 0.0 && attractiveness_min <= attractiveness_max &&
        attractiveness_max <= 1.0))
    throw ConfigError("synthetic: attractiveness range must satisfy 0 <= min <= max <= 1");
  if (!(noise >= 0.0)) throw ConfigError("synthetic: noise must be >= 0");
}

double position_discount(std::size_t slot) {
  return 1.0 / std::log2(static_cast<double>(slot) + 1.0);
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config, std::size_t num_queries) {
  config.validate();
  SyntheticDataset data;
  data.config = config;
  Rng rng(config.seed);
  const std::size_t n = config.num_items;
  const std::size_t width = config.feature_width();

  for (std::size_t q = 0; q < num_queries; ++q) {
    SyntheticQuery meta;
    meta.query_id = "s" + std::to_string(q);
    meta.beta = config.beta;
    RankingInstance inst;
    inst.query_id = meta.query_id;
    inst.num_items = n;
    inst.item_dim = width;
    inst.item_features.assign(n * width, 0.0);

    // Items are drawn, then laid out in a uniformly random display order.
    std::vector<SyntheticItem> drawn(n);
    for (auto& item : drawn) {
      item.category = static_cast<std::size_t>(rng.below(config.num_categories));
      item.attractiveness = rng.uniform(config.attractiveness_min, config.attractiveness_max);
    }
    std::vector<std::size_t> display(n);
    for (std::size_t i = 0; i < n; ++i) display[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(display[i - 1], display[rng.below(i)]);
    for (std::size_t t = 0; t < n; ++t) meta.items.push_back(drawn[display[t]]);

    std::vector<std::size_t> seen(config.num_categories, 0);
    for (std::size_t t = 0; t < n; ++t) {
      const auto& item = meta.items[t];
      double* row = inst.item_features.data() + t * width;
      row[item.category] = config.category_signal;
      row[config.num_categories] = item.attractiveness;
      for (std::size_t j = 0; j < width; ++j) row[j] += config.noise * rng.normal();

      const double p = item.attractiveness * position_discount(t + 1) *
                       std::pow(config.beta, static_cast<double>(seen[item.category]));
      const int click = rng.uniform() < p ? 1 : 0;
      ++seen[item.category];
      inst.clicks.push_back(click);
      inst.grades.push_back(click ? 4 : 0);
    }
    inst.display_order = identity_permutation(n);
    data.instances.push_back(std::move(inst));
    data.metadata.push_back(std::move(meta));
  }
  return data;
}

double expected_clicks(const SyntheticQuery& query, std::span<const std::size_t> order) {
  if (!is_permutation(order, query.items.size()))
    throw ContractViolation("expected_clicks: order is not a permutation of the query's items");
  std::map<std::size_t, std::size_t> seen;
  double total = 0.0;
  for (std::size_t t = 0; t < order.size(); ++t) {
    const auto& item = query.items[order[t]];
    const std::size_t m = seen[item.category]++;
    total += item.attractiveness * position_discount(t + 1) *
             std::pow(query.beta, static_cast<double>(m));
  }
  return total;
}

OracleSlate oracle_optimal_slate(const SyntheticQuery& query) {
  const std::size_t n = query.items.size();
  if (n > kMaxOracleItems)
    throw ConfigError("oracle: " + std::to_string(n) + " items means " + std::to_string(n) +
                      "! orders; use at most " + std::to_string(kMaxOracleItems) + " items");
  Permutation order = identity_permutation(n);
  OracleSlate best{order, expected_clicks(query, order)};
  while (std::next_permutation(order.begin(), order.end())) {
    const double v = expected_clicks(query, order);
    if (v > best.expected_clicks) best = {order, v};
  }
  return best;
}

void write_synthetic_metadata(std::ostream& out, std::span<const SyntheticQuery> metadata) {
  out << "query_id,item,category,attractiveness,beta\n";
  char buf[64];
  for (const auto& q : metadata) {
    for (std::size_t i = 0; i < q.items.size(); ++i) {
      out << q.query_id << ',' << i << ',' << q.items[i].category << ',';
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", q.items[i].attractiveness, q.beta);
      out << buf << '\n';
    }
  }
}

std::vector<SyntheticQuery> read_synthetic_metadata(std::istream& in) {
  std::vector<SyntheticQuery> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::istringstream fields(line);
    std::string qid, item, category, a, beta;
    if (!std::getline(fields, qid, ',') || !std::getline(fields, item, ',') ||
        !std::getline(fields, category, ',') || !std::getline(fields, a, ',') ||
        !std::getline(fields, beta))
      throw ParseError(line_no, "expected 5 comma-separated fields");
    try {
      if (out.empty() || out.back().query_id != qid) {
        out.push_back({qid, std::stod(beta), {}});
      }
      if (std::stoul(item) != out.back().items.size())
        throw ParseError(line_no, "item indices must be consecutive from 0");
      out.back().items.push_back({std::stoul(category), std::stod(a)});
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "non-numeric field");
    }
  }
  return out;
}

}  // namespace divnet
