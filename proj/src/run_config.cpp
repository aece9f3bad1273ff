#include "divnet/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "divnet/errors.hpp"

namespace divnet {

namespace {

constexpr unsigned kModelCommands = kTrainCommand | kEvalCommand | kRerankCommand | kAttentionCommand;
constexpr unsigned kAll = kModelCommands | kSynthCommand;

constexpr ConfigKey kKeys[] = {
    {"seed", "0", kAll, false, "master seed"},
    {"threads", "1", kEvalCommand, false, "worker cap for evaluation"},
    {"reproducible", "false", kAll, true, "omit wall-clock fields from outputs"},
    {"method", "divnet", kTrainCommand | kEvalCommand, false,
     "divnet|prm|pointwise (train); also submodular|dpp (eval)"},
    {"key_dim", "32", kTrainCommand, false, "attention key width"},
    {"value_dim", "32", kTrainCommand, false, "attention value width"},
    {"num_blocks", "1", kTrainCommand, false, "encoder blocks"},
    {"user_dim", "0", kModelCommands, false, "zero user-context width appended to LETOR rows"},
    {"alpha", "0.1", kModelCommands, false, "diversity weight"},
    {"lambda", "0.1", kTrainCommand, false, "supervised loss weight"},
    {"learning_rate", "0.01", kTrainCommand, false, "Adam step size"},
    {"batch_size", "32", kTrainCommand, false, "instances per update"},
    {"samples_per_instance", "4", kTrainCommand, false, "sampled slates per instance"},
    {"step_weights", "log-discount", kTrainCommand, false, "uniform|log-discount"},
    {"baseline", "batch-mean", kTrainCommand, false, "none|batch-mean"},
    {"supervision", "sampled", kTrainCommand, false, "sampled|logged-order"},
    {"greedy_decode", "false", kTrainCommand, true, "train on greedy decodes"},
    {"reward_cutoff", "0", kTrainCommand, false, "NDCG cutoff of the reward, 0 = full list"},
    {"graded_reward", "false", kTrainCommand, true, "reward on 0-4 grades"},
    {"epochs", "30", kTrainCommand, false, "maximum epochs"},
    {"patience", "5", kTrainCommand, false, "early-stopping patience, 0 = off"},
    {"validation_fraction", "0.2", kTrainCommand, false, "held-out share when no validation file"},
    {"hidden", "64", kTrainCommand, false, "pointwise scorer hidden width"},
    {"cutoffs", "1,3,5,10", kEvalCommand, false, "metric cutoffs"},
    {"gamma", "0.5", kEvalCommand, false, "submodular redundancy weight"},
    {"graded_ndcg", "false", kEvalCommand, true, "NDCG on 0-4 grades"},
    {"alpha_sweep", "", kEvalCommand, false, "comma list of alphas, one report each"},
    {"per_query", "false", kEvalCommand, true, "append per-query rows"},
    {"mode", "greedy", kRerankCommand, false, "greedy|sample"},
    {"query", "", kAttentionCommand, false, "query id, default the first slate"},
    {"num_queries", "200", kSynthCommand, false, "queries to generate"},
    {"num_items", "8", kSynthCommand, false, "items per query"},
    {"num_categories", "5", kSynthCommand, false, "item categories"},
    {"attractiveness_min", "0.1", kSynthCommand, false, "lower attractiveness bound"},
    {"attractiveness_max", "0.9", kSynthCommand, false, "upper attractiveness bound"},
    {"beta", "0.5", kSynthCommand, false, "repeat-category click decay"},
    {"category_signal", "1", kSynthCommand, false, "height of the category one-hot"},
    {"noise", "0.05", kSynthCommand, false, "feature noise std-dev"},
    {"oracle", "auto", kSynthCommand, false, "auto|true|false, optimal-slate table"},
};

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config key '" + key + "': '" + text + "' is not a valid number");
  return value;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  if (text.empty()) return parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    parts.push_back(item);
  }
  return parts;
}

}  // namespace

std::span<const ConfigKey> config_keys() { return kKeys; }

const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& key : kKeys)
    if (name == key.name) return &key;
  return nullptr;
}

std::string flag_name(std::string_view key) {
  std::string out = "--";
  for (char c : key) out += c == '_' ? '-' : c;
  return out;
}

RunConfig::RunConfig(unsigned command) : command_(command) {
  for (const auto& key : kKeys)
    if (key.commands & command) entries_[key.name] = {key.fallback, "default"};
}

void RunConfig::load_file(std::istream& in, const std::string& origin) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  std::map<std::string, bool> seen;
  for (const auto& item : items) {
    const std::string name = item.fullname();
    // CLI11 emits a marker item for section headers; none are allowed.
    if (!item.parents.empty() || name == "++" || name == "--")
      throw ConfigError(origin + ": sections are not supported");
    const ConfigKey* key = find_config_key(name);
    if (key == nullptr) throw ConfigError(origin + ": unknown key '" + name + "'");
    if (!(key->commands & command_))
      throw ConfigError(origin + ": key '" + name + "' does not apply to this command");
    if (seen[name]) throw ConfigError(origin + ": key '" + name + "' given twice");
    seen[name] = true;
    // Repeated keys arrive merged into one multi-value item.
    const bool list_key = name == "cutoffs" || name == "alpha_sweep";
    if (item.inputs.size() > 1 && !list_key)
      throw ConfigError(origin + ": key '" + name + "' takes a single value (given twice?)");
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    entries_[name] = {value, "file"};
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  load_file(in, path);
}

std::optional<std::string> RunConfig::set_flag(const std::string& key, const std::string& value) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown setting '" + key + "'");
  std::optional<std::string> note;
  if (it->second.source == "file" && it->second.value != value)
    note = flag_name(key) + "=" + value + " overrides config file value '" + it->second.value + "'";
  it->second = {value, "flag"};
  return note;
}

void RunConfig::inherit(const std::string& key, const std::string& value, const std::string& origin) {
  auto it = entries_.find(key);
  if (it == entries_.end() || user_set(key)) return;
  it->second = {value, origin};
}

bool RunConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

bool RunConfig::user_set(const std::string& key) const {
  const auto& src = entry(key).source;
  return src == "file" || src == "flag";
}

const RunConfig::Entry& RunConfig::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("setting '" + key + "' is not available here");
  return it->second;
}

const std::string& RunConfig::text(const std::string& key) const { return entry(key).value; }
std::string RunConfig::source(const std::string& key) const { return entry(key).source; }

double RunConfig::real(const std::string& key) const { return parse_number<double>(key, text(key)); }

std::size_t RunConfig::count(const std::string& key) const {
  return parse_number<std::size_t>(key, text(key));
}

std::uint64_t RunConfig::integer(const std::string& key) const {
  return parse_number<std::uint64_t>(key, text(key));
}

bool RunConfig::boolean(const std::string& key) const {
  const auto& v = text(key);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& part : split_list(text(key))) out.push_back(parse_number<double>(key, part));
  return out;
}

std::vector<std::size_t> RunConfig::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& part : split_list(text(key))) out.push_back(parse_number<std::size_t>(key, part));
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [key, e] : entries_) out[key] = e.value;
  return out;
}

ModelConfig model_config_from(const RunConfig& run, std::size_t item_dim, std::size_t user_dim) {
  ModelConfig m;
  m.item_dim = item_dim;
  m.user_dim = user_dim;
  m.key_dim = run.count("key_dim");
  m.value_dim = run.count("value_dim");
  m.num_blocks = run.count("num_blocks");
  m.validate();
  return m;
}

TrainConfig train_config_from(const RunConfig& run) {
  TrainConfig c;
  c.alpha = run.real("alpha");
  c.lambda = run.real("lambda");
  c.learning_rate = run.real("learning_rate");
  c.batch_size = run.count("batch_size");
  c.samples_per_instance = run.count("samples_per_instance");
  c.step_weights = parse_step_weight_mode(run.text("step_weights"));
  c.baseline = parse_baseline_mode(run.text("baseline"));
  c.supervision = parse_supervision_trajectory(run.text("supervision"));
  c.greedy_decode = run.boolean("greedy_decode");
  c.reward_cutoff = run.count("reward_cutoff");
  c.graded_reward = run.boolean("graded_reward");
  c.seed = run.integer("seed");
  c.max_epochs = run.count("epochs");
  c.patience = run.count("patience");
  c.record_wall_time = !run.boolean("reproducible");
  c.validate();
  return c;
}

SyntheticConfig synthetic_config_from(const RunConfig& run) {
  SyntheticConfig c;
  c.num_items = run.count("num_items");
  c.num_categories = run.count("num_categories");
  c.attractiveness_min = run.real("attractiveness_min");
  c.attractiveness_max = run.real("attractiveness_max");
  c.beta = run.real("beta");
  c.category_signal = run.real("category_signal");
  c.noise = run.real("noise");
  c.seed = run.integer("seed");
  c.validate();
  return c;
}

PointwiseConfig pointwise_config_from(const RunConfig& run) {
  PointwiseConfig c;
  c.hidden = run.count("hidden");
  c.learning_rate = run.real("learning_rate");
  c.epochs = run.count("epochs");
  c.batch_size = run.count("batch_size");
  c.seed = run.integer("seed");
  return c;
}

PrmConfig prm_config_from(const RunConfig& run) {
  PrmConfig c;
  c.learning_rate = run.real("learning_rate");
  c.epochs = run.count("epochs");
  c.batch_size = run.count("batch_size");
  c.seed = run.integer("seed");
  return c;
}

}  // namespace divnet
