#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnpool/eval.hpp"
#include "attnpool/model.hpp"
#include "attnpool/training.hpp"

namespace attnpool {

/// Weak supervision source: a precomputed occlusion label file, or a
/// teacher (model B) trained per seed with its own schedule.
struct WeakSource {
  std::optional<std::string> labels_path;
  std::optional<TrainConfig> teacher;
};

/// A fully resolved experiment. Parsing fills task/model-specific defaults
/// and rejects keys that do not apply to the selected modes.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  bool in_dim_from_data = true;  // in_dim was not given explicitly
  WeakSource weak;
  EvalOptions eval;
  std::optional<std::string> data;
  std::optional<std::string> out;

  /// Model B for weak supervision: same convolutional stack, no pooling.
  ModelConfig teacher_model() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

ExperimentConfig load_experiment(const std::string& path);

}  // namespace attnpool
