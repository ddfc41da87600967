#pragma once

#include <nlohmann/json.hpp>

#include "mfnet/model.hpp"
#include "mfnet/pipeline.hpp"

namespace mfnet {

// JSON round-trips for the config structs. Parsing is strict: unknown keys
// raise ConfigError so typos fail loudly instead of training with defaults.

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace mfnet
