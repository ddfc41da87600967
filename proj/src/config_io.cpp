#include "mfnet/config_io.hpp"

#include <array>
#include <set>
#include <string>

namespace mfnet {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (known.find(it.key()) == known.end()) {
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": bad value for '" + std::string(key) + "'");
  }
}

void read_depths(const json& j, const char* key, std::array<int64_t, 4>& out,
                 const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != 4) {
    throw ConfigError(where + ": '" + std::string(key) + "' must be an array of 4 integers");
  }
  for (size_t i = 0; i < 4; ++i) {
    try {
      out[i] = (*it)[i].get<int64_t>();
    } catch (const json::exception&) {
      throw ConfigError(where + ": bad value in '" + std::string(key) + "'");
    }
  }
}

}  // namespace

json model_config_to_json(const ModelConfig& cfg) {
  return json{{"base_channels", cfg.base_channels},
              {"encoder_depths", cfg.encoder_depths},
              {"bottleneck_depth", cfg.bottleneck_depth},
              {"decoder_depths", cfg.decoder_depths},
              {"head", head_mode_name(cfg.head)}};
}

ModelConfig model_config_from_json(const json& j) {
  const std::string where = "model config";
  reject_unknown_keys(
      j, {"base_channels", "encoder_depths", "bottleneck_depth", "decoder_depths", "head"},
      where);
  ModelConfig cfg;
  read_field(j, "base_channels", cfg.base_channels, where);
  read_depths(j, "encoder_depths", cfg.encoder_depths, where);
  read_field(j, "bottleneck_depth", cfg.bottleneck_depth, where);
  read_depths(j, "decoder_depths", cfg.decoder_depths, where);
  if (auto it = j.find("head"); it != j.end()) {
    if (!it->is_string()) throw ConfigError(where + ": 'head' must be a string");
    cfg.head = head_mode_from_name(it->get<std::string>());
  }
  cfg.validate();
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  return json{{"lr_max", cfg.lr_max},
              {"warmup_epochs", cfg.warmup_epochs},
              {"total_epochs", cfg.total_epochs},
              {"batch_size", cfg.batch_size},
              {"weight_decay", cfg.weight_decay},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"eps", cfg.eps},
              {"gamma", cfg.gamma},
              {"seed", cfg.seed},
              {"segment_seconds", cfg.segment_seconds},
              {"checkpoint_every_epochs", cfg.checkpoint_every_epochs}};
}

TrainConfig train_config_from_json(const json& j) {
  const std::string where = "train config";
  reject_unknown_keys(j,
                      {"lr_max", "warmup_epochs", "total_epochs", "batch_size", "weight_decay",
                       "beta1", "beta2", "eps", "gamma", "seed", "segment_seconds",
                       "checkpoint_every_epochs"},
                      where);
  TrainConfig cfg;
  read_field(j, "lr_max", cfg.lr_max, where);
  read_field(j, "warmup_epochs", cfg.warmup_epochs, where);
  read_field(j, "total_epochs", cfg.total_epochs, where);
  read_field(j, "batch_size", cfg.batch_size, where);
  read_field(j, "weight_decay", cfg.weight_decay, where);
  read_field(j, "beta1", cfg.beta1, where);
  read_field(j, "beta2", cfg.beta2, where);
  read_field(j, "eps", cfg.eps, where);
  read_field(j, "gamma", cfg.gamma, where);
  read_field(j, "seed", cfg.seed, where);
  read_field(j, "segment_seconds", cfg.segment_seconds, where);
  read_field(j, "checkpoint_every_epochs", cfg.checkpoint_every_epochs, where);
  cfg.validate();
  return cfg;
}

}  // namespace mfnet
