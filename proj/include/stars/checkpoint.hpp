#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "stars/adam.hpp"
#include "stars/model.hpp"

namespace stars {

struct TrainProgress {
  int64_t epoch = 0;
  AdamState adam;
  std::string rng_data;   // serialized stream states
  std::string rng_noise;
};

// Container file: 8-byte magic, u64 little-endian manifest length, a JSON
// manifest, then raw little-endian float64 arrays. Round trips are bit-exact.
void save_checkpoint(const Model& model, const TrainProgress& progress,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  ModelConfig config;
  Skeleton skeleton;
  ParamStore params;
  std::vector<BatchNormStats> bn_stats;
  TrainProgress progress;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Reconstructs the model and overwrites its parameters and running statistics
// with the stored values.
Model model_from_checkpoint(const LoadedCheckpoint& loaded);

}  // namespace stars
