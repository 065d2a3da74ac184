#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tpg/metrics.hpp"
#include "tpg/model.hpp"
#include "tpg/objective.hpp"
#include "tpg/rollout.hpp"

namespace tpg {

enum class DataSource { synthetic, jigsaws };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  std::filesystem::path path = "data/synthetic";  // dataset directory (manifest + clips)
  std::filesystem::path raw_path;                 // JIGSAWS-layout root, ingestion only
  int num_classes = 4;
  int64_t clips_per_class = 25;
  int64_t clip_length = 30;
  double test_fraction = 0.2;
  uint64_t seed = 7;
  int64_t train_users = 6;  // JIGSAWS: first users by id go to train
};

struct EvalConfig {
  int64_t horizon = 20;
  int64_t k = 10;
  std::vector<Metric> metrics{Metric::psnr, Metric::ssim, Metric::feat_cosine};
  int64_t clip_count = 100;  // balanced across classes
  std::vector<int64_t> times{15, 20, 25, 30};
  std::vector<std::string> variants{"TPG-VAE", "ML-VAE", "CL-VAE", "CM-VAE", "M-VAE", "SVG-LP*"};
  // Variants evaluated with k prior samples and best-of-k selection instead of prior means.
  std::vector<std::string> sampled_variants{"SVG-LP*"};
  uint64_t seed = 11;
  uint64_t embedder_seed = 1234;
  int64_t batch_size = 16;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  TrainingConfig training;
  EvalConfig eval;
  std::filesystem::path output = "runs/default";
  std::string variant = "TPG-VAE";

  // Relative paths are resolved against this directory.
  std::filesystem::path base_dir = ".";

  std::filesystem::path data_dir() const;
  std::filesystem::path raw_dir() const;
  std::filesystem::path output_dir() const;

  // ArgumentError on inconsistent settings (e.g. channel or class mismatch).
  void validate() const;
};

std::string to_string(DataSource source);
DataSource data_source_from_string(const std::string& name);

// YAML document with sections data / model / training / eval and top-level
// `output` and `variant`. Missing keys keep their defaults; unknown keys are a ParseError.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
std::string dump_config(const ExperimentConfig& config);

}  // namespace tpg
