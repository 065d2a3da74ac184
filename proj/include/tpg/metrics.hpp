#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tpg/rollout.hpp"

namespace tpg {

enum class Metric { psnr, ssim, feat_cosine };

std::string to_string(Metric metric);
Metric metric_from_string(std::string_view name);
const std::vector<Metric>& all_metrics();

inline constexpr double kPsnrCapDb = 100.0;

double psnr_from_mse(double mse);
// Frames are [C, H, W] with values in [0,1]; identical frames give kPsnrCapDb.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

// Mean SSIM over all fully-contained windows, on luminance for 3-channel frames.
double ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimOptions& options = {});

// Maps a batch of frames [N, C, H, W] to one feature vector per frame [N, D].
class FrameEmbedder {
 public:
  virtual ~FrameEmbedder() = default;
  virtual torch::Tensor embed(const torch::Tensor& frames) = 0;
};

// Frozen, randomly initialised conv net with a final fully connected layer.
// Absolute similarities are not comparable with a pretrained classifier's.
class RandomConvEmbedder final : public FrameEmbedder {
 public:
  explicit RandomConvEmbedder(int64_t channels = 3, uint64_t seed = 1234, int64_t dim = 256);
  torch::Tensor embed(const torch::Tensor& frames) override;

 private:
  torch::nn::Sequential net_;
};

double cosine_similarity(const torch::Tensor& u, const torch::Tensor& v);
double feature_cosine(const torch::Tensor& a, const torch::Tensor& b, FrameEmbedder& embedder);

struct MetricSeries {
  Metric metric = Metric::psnr;
  std::vector<double> per_step;
  std::string clip_id;
  std::string variant;
  int64_t first_t = 1;  // absolute time index of per_step[0]
};

// One value per step for predicted/truth sequences [H, C, H, W].
std::vector<double> per_step_metric(const torch::Tensor& predicted, const torch::Tensor& truth,
                                    Metric metric, FrameEmbedder* embedder = nullptr);

double horizon_mean(const std::vector<double>& values);

// Index of the sample with the highest horizon-mean metric; lowest index wins ties.
// Each sample's predicted tensor holds one clip ([1, H, C, H, W] or [H, C, H, W]).
size_t best_of_k_index(const std::vector<RolloutResult>& samples, const torch::Tensor& truth,
                       Metric metric, FrameEmbedder* embedder = nullptr);
const RolloutResult& best_of_k(const std::vector<RolloutResult>& samples, const torch::Tensor& truth,
                               Metric metric, FrameEmbedder* embedder = nullptr);

struct AggregateRow {
  std::string variant;
  Metric metric = Metric::psnr;
  int64_t t = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over clips
};

struct AggregateTable {
  std::vector<AggregateRow> rows;

  // Rows whose t is in `times`, keeping (variant, metric, t) order.
  AggregateTable at_times(const std::vector<int64_t>& times) const;
  // Per-step mean curve of one (variant, metric), sorted by t.
  std::vector<std::pair<int64_t, double>> curve(const std::string& variant, Metric metric) const;
  std::vector<std::string> variants() const;
  std::vector<Metric> metrics() const;

  // CSV with header exactly "variant,metric,t,mean,std".
  void write_csv(const std::filesystem::path& path) const;
  static AggregateTable read_csv(const std::filesystem::path& path);
};

inline constexpr const char* kAggregateCsvHeader = "variant,metric,t,mean,std";

// Per-step mean and population std across clips for every (variant, metric).
// ArgumentError when horizons or clip sets disagree.
AggregateTable aggregate(const std::vector<MetricSeries>& series);

}  // namespace tpg
