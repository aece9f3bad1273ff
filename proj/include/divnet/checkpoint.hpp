#pragma once

// Self-describing JSON checkpoints for DivNet, the one-pass attention
// baseline, the pointwise scorer and resumable training state.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "divnet/baselines.hpp"
#include "divnet/model.hpp"
#include "divnet/tensor.hpp"
#include "divnet/training.hpp"
#include "json.hpp"

namespace divnet {

inline constexpr int kCheckpointVersion = 1;

enum class ModelKind { DivNet, Prm, Pointwise };
const char* to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;  // row-major
};

struct OptimizerState {
  std::uint64_t steps = 0;
  std::vector<std::vector<double>> first_moments;
  std::vector<std::vector<double>> second_moments;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  ModelKind kind = ModelKind::DivNet;
  nlohmann::json config = nlohmann::json::object();  // includes "model" dims
  std::vector<NamedTensor> tensors;
  std::optional<OptimizerState> optimizer;
  std::string rng_state;
  nlohmann::json training;  // progress counters when resumable

  const NamedTensor& tensor(const std::string& name) const;
};

// Compact JSON plus a trailing newline; the document carries an FNV-1a
// checksum of its own content. Doubles use the shortest text that reads
// back to the same value.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
// Throws VersionError for other format versions and IntegrityError for
// truncated, corrupt or inconsistent documents.
Checkpoint parse_checkpoint(std::string_view text);

void save_checkpoint_file(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint_file(const std::string& path);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

Checkpoint make_checkpoint(const DivNetParams& params, ModelKind kind = ModelKind::DivNet);
DivNetParams params_from_checkpoint(const Checkpoint& checkpoint);

Checkpoint make_checkpoint(const PointwiseScorer& scorer);
PointwiseScorer scorer_from_checkpoint(const Checkpoint& checkpoint);

// Current and best parameters, Adam moments, rng stream and counters.
Checkpoint make_training_checkpoint(const TrainState& state);
TrainState restore_training(const Checkpoint& checkpoint);

}  // namespace divnet
