#pragma once

#include <cstdint>
#include <string>

#include "pira/model.h"

namespace pira {

struct CheckpointMeta {
  int64_t step = 0;
  uint64_t seed = 0;
};

struct LoadedCheckpoint {
  ModelParams params;
  CheckpointMeta meta;
};

// Binary checkpoint: "PIRA" magic, u32 format version, a JSON block holding
// the model config, vocabulary, and training metadata, then each named
// tensor as (name, shape, little-endian float32 payload). Round-trips
// bitwise.
void save_checkpoint(const ModelParams& params, const CheckpointMeta& meta,
                     const std::string& path);
LoadedCheckpoint load_checkpoint(const std::string& path);
// Refuses (ConfigMismatchError) to load a checkpoint whose ModelConfig
// differs from `expected`.
LoadedCheckpoint load_checkpoint(const std::string& path, const ModelConfig& expected);

}  // namespace pira
