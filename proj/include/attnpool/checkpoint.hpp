#pragma once

#include <filesystem>

#include <json.hpp>

#include "attnpool/model.hpp"

namespace attnpool {

inline constexpr int kCheckpointFormatVersion = 1;

/// {"format_version", "model": ModelConfig, "params": {name: {"shape", "values"}}, "metadata"}
nlohmann::json checkpoint_to_json(const Model& model, const nlohmann::json& metadata = nlohmann::json::object());
Model model_from_checkpoint(const nlohmann::json& j);

/// Atomic write (temp file + rename).
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace attnpool
