#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "igan/training.hpp"

namespace igan {

struct CheckpointManifest {
  long version = 1;
  long g_step = 0;
  long d_step = 0;
  std::uint64_t config_hash = 0;
  long adam_g_t = 0;
  long adam_d_t = 0;
  std::string rng_noise;
  std::string loader_epoch_rng;  // empty before the first training step
  long loader_cursor = 0;
};

// Writes a text manifest followed by every parameter, layer state tensor
// (batch-norm statistics, spectral-norm vectors) and Adam moment as a named
// float32 blob. The write is atomic: a temp file is renamed into place.
template <typename T>
void save_checkpoint(TrainState<T>& state, const std::string& path);

// Restores into a state built with the same config and network spec. Throws
// ConfigError on a config-hash mismatch, DataError on malformed, truncated or
// mismatched files. Training resumed from the result replays the original
// run exactly (bitwise for the float instantiation).
template <typename T>
void load_checkpoint(TrainState<T>& state, const std::string& path);

// Raw view of a checkpoint file for tools and tests.
struct CheckpointContents {
  CheckpointManifest manifest;
  std::map<std::string, Tensor<float>> blobs;
};
CheckpointContents read_checkpoint(const std::string& path);

}  // namespace igan
