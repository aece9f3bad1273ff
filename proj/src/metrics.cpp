#include "divnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "divnet/errors.hpp"

namespace divnet {

namespace {

void require_cutoff(std::size_t k) {
  if (k < 1) throw ConfigError("metric cutoff must be at least 1");
}

double dcg(std::span<const int> labels, std::size_t k) {
  double total = 0.0;
  const std::size_t n = std::min(k, labels.size());
  for (std::size_t i = 0; i < n; ++i) {
    total += (std::exp2(static_cast<double>(labels[i])) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  }
  return total;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

std::string display_name(const std::string& name) {
  if (name == "ndcg") return "NDCG";
  if (name == "precision") return "Pre";
  if (name == "map") return "MAP";
  if (name == "ild") return "ILD";
  return name;
}

}  // namespace

double ndcg_at_k(std::span<const int> ranked_labels, std::size_t k) {
  require_cutoff(k);
  std::vector<int> ideal(ranked_labels.begin(), ranked_labels.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal, k);
  if (idcg == 0.0) return 0.0;
  return dcg(ranked_labels, k) / idcg;
}

double precision_at_k(std::span<const int> ranked_labels, std::size_t k) {
  require_cutoff(k);
  const std::size_t n = std::min(k, ranked_labels.size());
  double hits = 0.0;
  for (std::size_t i = 0; i < n; ++i) hits += ranked_labels[i] > 0 ? 1.0 : 0.0;
  return hits / static_cast<double>(k);
}

double map_at_k(std::span<const int> ranked_labels, std::size_t k) {
  require_cutoff(k);
  const std::size_t n = std::min(k, ranked_labels.size());
  double total = 0.0;
  double hits = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked_labels[i] <= 0) continue;
    hits += 1.0;
    total += hits / static_cast<double>(i + 1);  // Pre@i · I(i)
  }
  return total / static_cast<double>(k);
}

double intra_list_distance(const RankingInstance& inst, std::span<const std::size_t> order,
                           std::size_t k) {
  if (k < 2) throw ConfigError("intra_list_distance needs a cutoff of at least 2");
  const std::size_t n = std::min(k, order.size());
  if (n < 2) return 0.0;
  // Pairs are visited in index-sorted order so the value is a set function.
  std::vector<std::size_t> top(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(top.begin(), top.end());
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      total += 1.0 - cosine(inst.item_row(top[i]), inst.item_row(top[j]));
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

std::vector<int> labels_in_order(std::span<const int> labels, std::span<const std::size_t> order) {
  std::vector<int> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(labels[i]);
  return out;
}

double EvalReport::value(const std::string& name, std::size_t cutoff) const {
  for (const auto& m : metrics)
    if (m.name == name && m.cutoff == cutoff) return m.mean;
  throw std::out_of_range("metric " + name + "@" + std::to_string(cutoff) + " not in report");
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "metric,cutoff,mean,n_queries\n";
  out << std::setprecision(17);
  for (const auto& m : metrics) out << m.name << ',' << m.cutoff << ',' << m.mean << ',' << m.queries << '\n';
  return out.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json doc;
  doc["method"] = method;
  doc["queries"] = metrics.empty() ? 0 : metrics.front().queries;
  nlohmann::json values = nlohmann::json::object();
  for (const auto& m : metrics) values[display_name(m.name) + "@" + std::to_string(m.cutoff)] = m.mean;
  doc["metrics"] = values;
  if (!per_query.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& q : per_query)
      rows.push_back({{"query_id", q.query_id}, {"zero_positives", q.zero_positives}, {"values", q.values}});
    doc["per_query"] = rows;
  }
  return doc;
}

EvalReport evaluate(const Ranker& ranker, std::span<const RankingInstance> instances,
                    const EvalOptions& options, const std::string& method) {
  if (instances.empty()) throw ConfigError("evaluate: no instances");
  for (auto k : options.cutoffs) require_cutoff(k);

  EvalReport report;
  report.method = method;
  for (auto k : options.cutoffs) {
    report.metrics.push_back({"ndcg", k, 0.0, 0});
    report.metrics.push_back({"precision", k, 0.0, 0});
    report.metrics.push_back({"map", k, 0.0, 0});
    if (options.include_ild && k >= 2) report.metrics.push_back({"ild", k, 0.0, 0});
  }

  std::vector<QueryBreakdown> rows(instances.size());
  auto score_one = [&](std::size_t q) {
    const auto& inst = instances[q];
    const Permutation order = ranker(inst);
    if (!is_permutation(order, inst.num_items))
      throw ContractViolation("evaluate: ranker returned an invalid permutation for '" +
                              inst.query_id + "'");
    const auto clicks = labels_in_order(inst.clicks, order);
    const auto gains = options.graded ? labels_in_order(inst.grades, order) : clicks;
    auto& row = rows[q];
    row.query_id = inst.query_id;
    row.zero_positives = std::none_of(gains.begin(), gains.end(), [](int v) { return v > 0; });
    for (const auto& m : report.metrics) {
      if (m.name == "ndcg") row.values.push_back(ndcg_at_k(gains, m.cutoff));
      else if (m.name == "precision") row.values.push_back(precision_at_k(clicks, m.cutoff));
      else if (m.name == "map") row.values.push_back(map_at_k(clicks, m.cutoff));
      else row.values.push_back(intra_list_distance(inst, order, m.cutoff));
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.threads, instances.size()));
  if (workers == 1) {
    for (std::size_t q = 0; q < instances.size(); ++q) score_one(q);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t q = w; q < instances.size(); q += workers) score_one(q);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Sorting each metric's per-query values before summing makes the mean
  // independent of instance order.
  for (std::size_t j = 0; j < report.metrics.size(); ++j) {
    std::vector<double> column;
    column.reserve(rows.size());
    for (const auto& r : rows) column.push_back(r.values[j]);
    std::sort(column.begin(), column.end());
    double total = 0.0;
    for (double v : column) total += v;
    report.metrics[j].mean = total / static_cast<double>(rows.size());
    report.metrics[j].queries = rows.size();
  }
  if (options.per_query) report.per_query = std::move(rows);
  return report;
}

}  // namespace divnet
