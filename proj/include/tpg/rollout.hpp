#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "tpg/model.hpp"
#include "tpg/noise.hpp"
#include "tpg/video_data.hpp"

namespace tpg {

enum class VariantName { TPG_VAE, ML_VAE, CL_VAE, CM_VAE, M_VAE, SVG_LP_STAR };

// Ablation variants differ only in which latent parts exist.
struct VariantSpec {
  VariantName name = VariantName::TPG_VAE;
  LatentMask mask;

  static VariantSpec named(VariantName name);
  // Accepts "TPG-VAE", "ML-VAE", "CL-VAE", "CM-VAE", "M-VAE", "SVG-LP*" (also "SVG-LP-STAR"
  // and the underscore forms). LookupError otherwise.
  static VariantSpec parse(std::string_view text);
  static const std::vector<VariantName>& all();

  std::string label() const;      // "TPG-VAE", ..., "SVG-LP*"
  std::string file_stem() const;  // filesystem-safe label
  // ArgumentError for masks without a content or motion part (label-only or empty).
  void validate() const;
};

TpgModel make_model(const ModelConfig& config, const VariantSpec& variant, uint64_t seed);

// Frames [B, T, C, H, W] plus one-hot labels [B, n_l].
struct ClipBatch {
  torch::Tensor frames;
  torch::Tensor labels;
  std::vector<std::string> clip_ids;

  int64_t size() const { return frames.size(0); }
  int64_t length() const { return frames.size(1); }
  ClipBatch to(const torch::TensorOptions& options) const;
  ClipBatch index(const std::vector<int64_t>& rows) const;
};

// Stacks frames [start, start + length) of every clip. ArgumentError if a clip is too short.
ClipBatch make_batch(const std::vector<const VideoClip*>& clips, int64_t start, int64_t length,
                     int num_classes);
ClipBatch make_batch(const std::vector<VideoClip>& clips, int64_t start, int64_t length,
                     int num_classes);

enum class RolloutMode { teacher_forced, prior_mean, sampled };
std::string to_string(RolloutMode mode);

// Gaussians produced for one generated step; parts of an inactive latent are undefined.
struct StepLatents {
  LatentGaussian posterior_content;
  LatentGaussian prior_content;
  LatentGaussian posterior_motion;
  LatentGaussian prior_motion;
  torch::Tensor label;  // label part fed to the predictor, undefined when inactive
};

struct RolloutResult {
  torch::Tensor predicted;        // [B, horizon, C, H, W]
  torch::Tensor reconstructions;  // [B, t_p - 1, C, H, W] (teacher-forced only)
  std::vector<StepLatents> latents;
  RolloutMode mode = RolloutMode::prior_mean;

  int64_t horizon() const { return predicted.size(1); }
  // reconstructions followed by predicted, i.e. frames for t = 2..T.
  torch::Tensor generated() const;
};

// Training pass over t = 2..T with posterior samples (full teacher forcing). The
// decoder's skips come from x_{t-1} while t - 1 <= t_p and from x_{t_p} afterwards.
RolloutResult teacher_forced_pass(TpgModel& model, const ClipBatch& batch, int64_t t_p,
                                  NoiseSource& noise);

// Inference state machine: warm-up on the observed frames, then one generated frame per
// step. With no noise source the latents are the prior means; otherwise samples from the priors.
class RolloutSession {
 public:
  RolloutSession(TpgModel model, const torch::Tensor& observed, const torch::Tensor& labels,
                 std::shared_ptr<NoiseSource> noise = nullptr);

  torch::Tensor step();                 // next frame [B, C, H, W]
  torch::Tensor advance(int64_t steps);  // [B, steps, C, H, W]
  int64_t next_time() const { return next_t_; }  // 1-based time of the next generated frame

 private:
  TernaryLatent draw_latent(const LatentGaussian* content, const LatentGaussian* motion);

  TpgModel model_;
  std::shared_ptr<NoiseSource> noise_;
  torch::Tensor labels_;
  std::vector<torch::Tensor> skips_;
  torch::Tensor h_prev_;
  torch::Tensor motion_prev_;
  torch::Tensor frame_prev_;
  RecurrentState prior_content_state_;
  RecurrentState prior_motion_state_;
  RecurrentState predictor_state_;
  int64_t next_t_ = 0;
};

// Deterministic rollout from prior means. observed is [B, t_p, C, H, W].
RolloutResult prior_mean_rollout(TpgModel& model, const torch::Tensor& observed,
                                 const torch::Tensor& labels, int64_t horizon);

using NoiseFactory = std::function<std::shared_ptr<NoiseSource>(int64_t sample)>;

// k independent rollouts sampling the prior Gaussians; sample i uses seed derive_seed(seed, i).
std::vector<RolloutResult> sampled_rollout(TpgModel& model, const torch::Tensor& observed,
                                           const torch::Tensor& labels, int64_t horizon, int64_t k,
                                           uint64_t seed);
std::vector<RolloutResult> sampled_rollout(TpgModel& model, const torch::Tensor& observed,
                                           const torch::Tensor& labels, int64_t horizon, int64_t k,
                                           const NoiseFactory& noise_for_sample);

}  // namespace tpg
