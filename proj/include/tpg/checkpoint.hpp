#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "tpg/model.hpp"
#include "tpg/objective.hpp"
#include "tpg/rollout.hpp"

namespace tpg {

struct CheckpointMeta {
  ModelConfig model;
  TrainingConfig training;
  std::string variant;  // VariantSpec label
  int64_t epoch = 0;    // epochs completed
  uint64_t model_seed = 0;
  std::string data_fingerprint;
  double loss = 0.0;  // epoch-mean total loss at save time
};

// A checkpoint is a directory holding model.pt, optimizer.pt (optional) and
// checkpoint.meta.json.
inline constexpr const char* kCheckpointMetaFile = "checkpoint.meta.json";
inline constexpr const char* kCheckpointModelFile = "model.pt";
inline constexpr const char* kCheckpointOptimizerFile = "optimizer.pt";

void save_checkpoint(const std::filesystem::path& dir, TpgModel& model,
                     torch::optim::Adam* optimizer, const CheckpointMeta& meta);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  VariantSpec variant;
  TpgModel model{nullptr};
};

// IoError naming the offending file when any part is missing or unreadable.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);
// Restores Adam moments saved alongside the model.
void load_optimizer_state(const std::filesystem::path& dir, torch::optim::Adam& optimizer);

// Digest of the stored weights, identifying the checkpoint in prediction records.
std::string checkpoint_fingerprint(const std::filesystem::path& dir);

}  // namespace tpg
