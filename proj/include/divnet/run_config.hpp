#pragma once

// Resolved settings for one CLI command. Values come from built-in
// defaults, then a "key = value" config file, then command-line flags;
// a flag that disagrees with the file wins and the disagreement is
// reported back to the caller.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "divnet/baselines.hpp"
#include "divnet/model.hpp"
#include "divnet/synthetic.hpp"
#include "divnet/training.hpp"
#include "json.hpp"

namespace divnet {

enum CommandMask : unsigned {
  kTrainCommand = 1u << 0,
  kEvalCommand = 1u << 1,
  kRerankCommand = 1u << 2,
  kSynthCommand = 1u << 3,
  kAttentionCommand = 1u << 4,
};

struct ConfigKey {
  const char* name;
  const char* fallback;
  unsigned commands;
  bool is_flag;  // boolean switch on the command line
  const char* help;
};

std::span<const ConfigKey> config_keys();
const ConfigKey* find_config_key(std::string_view name);
// "learning_rate" -> "--learning-rate"
std::string flag_name(std::string_view key);

class RunConfig {
 public:
  explicit RunConfig(unsigned command);

  // Throws ConfigError for unknown keys, keys the command does not use,
  // duplicates and malformed lines.
  void load_file(std::istream& in, const std::string& origin);
  void load_file(const std::string& path);

  // Returns a note when the flag replaces a different config-file value.
  std::optional<std::string> set_flag(const std::string& key, const std::string& value);
  // Adopts a value from another artifact (a checkpoint) unless the key was
  // set by file or flag.
  void inherit(const std::string& key, const std::string& value, const std::string& origin);

  bool has(const std::string& key) const;
  bool user_set(const std::string& key) const;
  const std::string& text(const std::string& key) const;
  std::string source(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t integer(const std::string& key) const;
  bool boolean(const std::string& key) const;
  // Comma-separated lists; empty text gives an empty list.
  std::vector<double> reals(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;

  // Every resolved key with its value, as strings.
  nlohmann::json to_json() const;

 private:
  struct Entry {
    std::string value;
    std::string source;  // default, file, flag, or an inherited origin
  };
  const Entry& entry(const std::string& key) const;

  unsigned command_;
  std::map<std::string, Entry> entries_;
};

ModelConfig model_config_from(const RunConfig& run, std::size_t item_dim, std::size_t user_dim);
TrainConfig train_config_from(const RunConfig& run);
SyntheticConfig synthetic_config_from(const RunConfig& run);
PointwiseConfig pointwise_config_from(const RunConfig& run);
PrmConfig prm_config_from(const RunConfig& run);

}  // namespace divnet
