#pragma once

#include <string>

#include "mfnet/model.hpp"

namespace mfnet {

// Binary checkpoint layout (all integers little-endian u32):
//   "MFN1" | version | config-JSON length + bytes |
//   tensor count | per tensor: name length + name, rank, dims... |
//   raw float32 payloads in manifest order.
// Loading rebuilds the model from the embedded config and validates the
// manifest names and shapes against it.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(Model<float>& model, const std::string& path);

Model<float> load_checkpoint(const std::string& path);

// As load_checkpoint, but additionally requires the embedded config to equal
// `expected` (CheckpointError kConfigMismatch otherwise).
Model<float> load_checkpoint(const std::string& path, const ModelConfig& expected);

}  // namespace mfnet
