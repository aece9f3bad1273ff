#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "divnet/instance.hpp"

namespace divnet {

// Reads "<grade> qid:<id> <fid>:<value> ... [# comment]" lines. Lines with
// the same qid form one instance, rows in file order. feature_width 0 infers
// the width from the largest feature id seen. User features are zero vectors
// of width user_dim.
std::vector<RankingInstance> parse_letor(std::istream& in, std::size_t feature_width = 0,
                                         std::size_t user_dim = 0);
std::vector<RankingInstance> load_letor(const std::string& path, std::size_t feature_width = 0,
                                        std::size_t user_dim = 0);

// Dense rows, all feature ids written, values with 17 significant digits.
void write_letor(std::ostream& out, std::span<const RankingInstance> instances);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DataSplit {
  std::vector<RankingInstance> train;
  std::vector<RankingInstance> validation;
  std::vector<RankingInstance> test;
};

// Shuffles whole queries with the seed, then cuts. Needs at least 3 queries;
// validation and test each get at least one.
DataSplit split_queries(std::span<const RankingInstance> instances, std::uint64_t seed,
                        SplitRatios ratios = {});

}  // namespace divnet
