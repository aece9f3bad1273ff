#include "divnet/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <fstream>
#include <sstream>

#include "divnet/errors.hpp"

namespace divnet {

namespace {

using nlohmann::json;

constexpr const char* kBestPrefix = "best.";

json tensor_to_json(const NamedTensor& t) {
  return {{"name", t.name}, {"shape", t.shape.dims()}, {"data", t.data}};
}

NamedTensor named_from_tensor(const std::string& name, const Tensor& t) {
  return {name, t.shape(), {t.data().begin(), t.data().end()}};
}

Tensor tensor_from_named(const NamedTensor& t) { return Tensor::from(t.shape, t.data, true); }

std::vector<NamedTensor> params_to_named(const DivNetParams& params, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : params.named_parameters()) out.push_back(named_from_tensor(prefix + name, t));
  return out;
}

DivNetParams params_from_named(const Checkpoint& ckpt, const ModelConfig& config,
                               const std::string& prefix) {
  // Shapes are checked against a freshly initialized model of the same config.
  DivNetParams params = DivNetParams::initialize(config, 0);
  for (auto& [name, target] : params.named_parameters()) {
    const NamedTensor& src = ckpt.tensor(prefix + name);
    if (src.shape != target.shape())
      throw IntegrityError("checkpoint tensor '" + prefix + name + "' has shape " + src.shape.str() +
                           ", model expects " + target.shape().str());
    std::copy(src.data.begin(), src.data.end(), target.mutable_data().begin());
  }
  return params;
}

}  // namespace

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::DivNet: return "divnet";
    case ModelKind::Prm: return "prm";
    case ModelKind::Pointwise: return "pointwise";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "divnet") return ModelKind::DivNet;
  if (text == "prm") return ModelKind::Prm;
  if (text == "pointwise") return ModelKind::Pointwise;
  throw ConfigError("unknown model kind '" + text + "'");
}

const NamedTensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw IntegrityError("checkpoint has no tensor '" + name + "'");
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json doc;
  doc["version"] = ckpt.version;
  doc["kind"] = to_string(ckpt.kind);
  doc["config"] = ckpt.config;
  json tensors = json::array();
  for (const auto& t : ckpt.tensors) tensors.push_back(tensor_to_json(t));
  doc["tensors"] = std::move(tensors);
  if (ckpt.optimizer) {
    doc["optimizer"] = {{"steps", ckpt.optimizer->steps},
                        {"m", ckpt.optimizer->first_moments},
                        {"v", ckpt.optimizer->second_moments}};
  } else {
    doc["optimizer"] = nullptr;
  }
  doc["rng"] = ckpt.rng_state;
  doc["training"] = ckpt.training;
  doc["checksum"] = hex64(fnv1a64(doc.dump()));
  return doc.dump() + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IntegrityError(std::string("checkpoint is not valid JSON (truncated?): ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version") || !doc["version"].is_number_integer())
    throw IntegrityError("checkpoint has no integer version field");
  const int version = doc["version"].get<int>();
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  if (!doc.contains("checksum") || !doc["checksum"].is_string())
    throw IntegrityError("checkpoint has no checksum");
  const std::string stored = doc["checksum"].get<std::string>();
  doc.erase("checksum");
  if (hex64(fnv1a64(doc.dump())) != stored) throw IntegrityError("checkpoint checksum mismatch");

  try {
    Checkpoint ckpt;
    ckpt.version = version;
    ckpt.kind = parse_model_kind(doc.at("kind").get<std::string>());
    ckpt.config = doc.at("config");
    for (const auto& t : doc.at("tensors")) {
      NamedTensor nt;
      nt.name = t.at("name").get<std::string>();
      nt.shape = Shape(t.at("shape").get<std::vector<std::size_t>>());
      nt.data = t.at("data").get<std::vector<double>>();
      if (nt.shape.rank() < 1 || nt.shape.rank() > 2 || nt.data.size() != nt.shape.numel())
        throw IntegrityError("tensor '" + nt.name + "' data does not match shape " + nt.shape.str());
      ckpt.tensors.push_back(std::move(nt));
    }
    const auto& opt = doc.at("optimizer");
    if (!opt.is_null()) {
      OptimizerState state;
      state.steps = opt.at("steps").get<std::uint64_t>();
      state.first_moments = opt.at("m").get<std::vector<std::vector<double>>>();
      state.second_moments = opt.at("v").get<std::vector<std::vector<double>>>();
      ckpt.optimizer = std::move(state);
    }
    ckpt.rng_state = doc.at("rng").get<std::string>();
    ckpt.training = doc.at("training");
    return ckpt;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw IntegrityError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint_file(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << serialize_checkpoint(checkpoint);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

json model_config_to_json(const ModelConfig& c) {
  return {{"item_dim", c.item_dim},
          {"user_dim", c.user_dim},
          {"key_dim", c.key_dim},
          {"value_dim", c.value_dim},
          {"num_blocks", c.num_blocks},
          {"categorical_fields", c.categorical_fields},
          {"categorical_buckets", c.categorical_buckets},
          {"categorical_width", c.categorical_width}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.item_dim = j.at("item_dim").get<std::size_t>();
  c.user_dim = j.at("user_dim").get<std::size_t>();
  c.key_dim = j.at("key_dim").get<std::size_t>();
  c.value_dim = j.at("value_dim").get<std::size_t>();
  c.num_blocks = j.at("num_blocks").get<std::size_t>();
  c.categorical_fields = j.at("categorical_fields").get<std::size_t>();
  c.categorical_buckets = j.at("categorical_buckets").get<std::size_t>();
  c.categorical_width = j.at("categorical_width").get<std::size_t>();
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.samples_per_instance = j.at("samples_per_instance").get<std::size_t>();
  c.step_weights = parse_step_weight_mode(j.at("step_weights").get<std::string>());
  c.baseline = parse_baseline_mode(j.at("baseline").get<std::string>());
  c.supervision = parse_supervision_trajectory(j.at("supervision").get<std::string>());
  c.greedy_decode = j.at("greedy_decode").get<bool>();
  c.reward_cutoff = j.at("reward_cutoff").get<std::size_t>();
  c.graded_reward = j.at("graded_reward").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.validate();
  return c;
}

Checkpoint make_checkpoint(const DivNetParams& params, ModelKind kind) {
  if (kind == ModelKind::Pointwise) throw ConfigError("make_checkpoint: DivNet weights cannot be a pointwise checkpoint");
  Checkpoint ckpt;
  ckpt.kind = kind;
  ckpt.config["model"] = model_config_to_json(params.config);
  ckpt.tensors = params_to_named(params, "");
  return ckpt;
}

DivNetParams params_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind == ModelKind::Pointwise)
    throw ConfigError("checkpoint holds a pointwise scorer, not attention weights");
  try {
    return params_from_named(ckpt, model_config_from_json(ckpt.config.at("model")), "");
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint model config: ") + e.what());
  }
}

Checkpoint make_checkpoint(const PointwiseScorer& scorer) {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::Pointwise;
  ckpt.config["model"] = {{"item_dim", scorer.item_dim()},
                          {"user_dim", scorer.user_dim()},
                          {"hidden", scorer.hidden()}};
  for (const auto& [name, t] : scorer.named_parameters()) ckpt.tensors.push_back(named_from_tensor(name, t));
  return ckpt;
}

PointwiseScorer scorer_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::Pointwise)
    throw ConfigError(std::string("checkpoint holds a ") + to_string(ckpt.kind) +
                      " model, not a pointwise scorer");
  try {
    const auto& m = ckpt.config.at("model");
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const auto& t : ckpt.tensors) tensors.emplace_back(t.name, tensor_from_named(t));
    return PointwiseScorer::from_tensors(m.at("item_dim").get<std::size_t>(),
                                         m.at("user_dim").get<std::size_t>(), std::move(tensors));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint model config: ") + e.what());
  } catch (const ShapeError& e) {
    throw IntegrityError(e.what());
  }
}

Checkpoint make_training_checkpoint(const TrainState& state) {
  Checkpoint ckpt = make_checkpoint(state.params);
  auto best = params_to_named(state.best_params, kBestPrefix);
  ckpt.tensors.insert(ckpt.tensors.end(), best.begin(), best.end());
  ckpt.config["train"] = state.config.to_json();
  ckpt.optimizer = OptimizerState{state.optimizer.steps(), state.optimizer.first_moments(),
                                  state.optimizer.second_moments()};
  ckpt.rng_state = state.rng.state();
  ckpt.training = {{"epoch", state.epoch},
                   {"best_score", std::isfinite(state.best_score) ? json(state.best_score) : json(nullptr)},
                   {"best_epoch", state.best_epoch},
                   {"stale_epochs", state.stale_epochs}};
  return ckpt;
}

TrainState restore_training(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::DivNet || !ckpt.optimizer || ckpt.training.is_null())
    throw IntegrityError("checkpoint does not carry resumable training state");
  try {
    TrainState state;
    state.model = model_config_from_json(ckpt.config.at("model"));
    state.config = train_config_from_json(ckpt.config.at("train"));
    state.params = params_from_named(ckpt, state.model, "");
    state.best_params = params_from_named(ckpt, state.model, kBestPrefix);
    AdamOptions adam;
    adam.learning_rate = state.config.learning_rate;
    state.optimizer = Adam(adam);
    state.optimizer.restore(ckpt.optimizer->steps, ckpt.optimizer->first_moments,
                            ckpt.optimizer->second_moments);
    state.rng.set_state(ckpt.rng_state);
    state.epoch = ckpt.training.at("epoch").get<std::size_t>();
    const auto& best = ckpt.training.at("best_score");
    state.best_score = best.is_null() ? -std::numeric_limits<double>::infinity() : best.get<double>();
    state.best_epoch = ckpt.training.at("best_epoch").get<std::size_t>();
    state.stale_epochs = ckpt.training.at("stale_epochs").get<std::size_t>();
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("training state: ") + e.what());
  }
}

}  // namespace divnet
