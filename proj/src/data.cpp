#include "divnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "divnet/errors.hpp"
#include "divnet/rng.hpp"

namespace divnet {

namespace {

struct RawRow {
  int grade = 0;
  std::vector<std::pair<std::size_t, double>> features;
};

bool parse_int(std::string_view text, long long& out) {
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size() && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<RankingInstance> parse_letor(std::istream& in, std::size_t feature_width,
                                         std::size_t user_dim) {
  std::vector<std::string> qids;
  std::unordered_map<std::string, std::vector<RawRow>> groups;
  std::size_t max_id = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string grade_tok;
    if (!(tokens >> grade_tok)) continue;  // blank or comment-only

    long long grade = 0;
    if (!parse_int(grade_tok, grade)) throw ParseError(line_no, "grade '" + grade_tok + "' is not an integer");
    if (grade < 0 || grade > 4) throw ParseError(line_no, "grade " + grade_tok + " outside 0-4");

    std::string qid_tok;
    if (!(tokens >> qid_tok) || qid_tok.rfind("qid:", 0) != 0 || qid_tok.size() == 4)
      throw ParseError(line_no, "expected qid:<id> after the grade");
    const std::string qid = qid_tok.substr(4);

    RawRow row;
    row.grade = static_cast<int>(grade);
    std::string tok;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      long long fid = 0;
      double value = 0.0;
      if (colon == std::string::npos || !parse_int(std::string_view(tok).substr(0, colon), fid) ||
          !parse_double(tok.substr(colon + 1), value))
        throw ParseError(line_no, "malformed feature '" + tok + "'");
      if (fid < 1) throw ParseError(line_no, "feature id must be positive in '" + tok + "'");
      const auto id = static_cast<std::size_t>(fid);
      if (feature_width != 0 && id > feature_width)
        throw ParseError(line_no, "feature id " + std::to_string(id) + " exceeds width " +
                                      std::to_string(feature_width));
      max_id = std::max(max_id, id);
      row.features.emplace_back(id, value);
    }
    auto [it, inserted] = groups.try_emplace(qid);
    if (inserted) qids.push_back(qid);
    it->second.push_back(std::move(row));
  }

  const std::size_t width = feature_width != 0 ? feature_width : max_id;
  std::vector<RankingInstance> out;
  out.reserve(qids.size());
  for (const auto& qid : qids) {
    const auto& rows = groups.at(qid);
    RankingInstance inst;
    inst.query_id = qid;
    inst.num_items = rows.size();
    inst.item_dim = width;
    inst.item_features.assign(rows.size() * width, 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (auto [id, value] : rows[i].features) inst.item_features[i * width + id - 1] = value;
      inst.grades.push_back(rows[i].grade);
      inst.clicks.push_back(binarize_grade(rows[i].grade));
    }
    inst.user_features.assign(user_dim, 0.0);
    inst.display_order = identity_permutation(rows.size());
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<RankingInstance> load_letor(const std::string& path, std::size_t feature_width,
                                        std::size_t user_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return parse_letor(in, feature_width, user_dim);
}

void write_letor(std::ostream& out, std::span<const RankingInstance> instances) {
  for (const auto& inst : instances) {
    for (std::size_t i = 0; i < inst.num_items; ++i) {
      out << inst.grades[i] << " qid:" << inst.query_id;
      const auto row = inst.item_row(i);
      for (std::size_t j = 0; j < row.size(); ++j) out << ' ' << (j + 1) << ':' << format_double(row[j]);
      out << '\n';
    }
  }
}

DataSplit split_queries(std::span<const RankingInstance> instances, std::uint64_t seed,
                        SplitRatios ratios) {
  const std::size_t n = instances.size();
  if (n < 3) throw ConfigError("split: need at least 3 queries, got " + std::to_string(n));
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split: ratios must be non-negative and sum to 1");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  auto count = [n](double r) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r * static_cast<double>(n))));
  };
  const std::size_t n_val = count(ratios.validation);
  const std::size_t n_test = count(ratios.test);
  const std::size_t n_train = n - n_val - n_test;

  DataSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inst = instances[order[i]];
    if (i < n_train) split.train.push_back(inst);
    else if (i < n_train + n_val) split.validation.push_back(inst);
    else split.test.push_back(inst);
  }
  return split;
}

}  // namespace divnet
