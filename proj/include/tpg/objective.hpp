#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>

#include "tpg/latent.hpp"
#include "tpg/model.hpp"
#include "tpg/noise.hpp"
#include "tpg/rollout.hpp"

namespace tpg {

struct TrainingConfig {
  double beta = 1e-4;
  double learning_rate = 1e-4;
  int64_t T = 20;
  int64_t t_p = 10;
  int64_t epochs = 200;
  int64_t batch_size = 16;
  uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip_norm = 5.0;  // <= 0 disables clipping
  int64_t checkpoint_every = 10;

  void validate() const;  // ArgumentError on violated ranges
};

// mean + exp(0.5 * log_var) * noise; noise must match the mean's shape.
torch::Tensor reparameterize(const LatentGaussian& gaussian, const torch::Tensor& noise);

// Closed-form KL(q || p) between diagonal Gaussians, summed over the last dimension.
torch::Tensor kl_diag_gaussian(const LatentGaussian& q, const LatentGaussian& p);

struct LossBreakdown {
  double recon_l1 = 0.0;
  double kl_content = 0.0;
  double kl_motion = 0.0;
  double total = 0.0;
  double beta = 0.0;
};

// Differentiable batch-mean loss terms (scalars).
struct LossTerms {
  torch::Tensor recon_l1;
  torch::Tensor kl_content;
  torch::Tensor kl_motion;
  torch::Tensor total;
  double beta = 0.0;

  LossBreakdown breakdown() const;
};

// Per-frame mean absolute error summed over t = 2..T and both KL sums over the same
// steps, averaged over the batch. targets is the [B, T, C, H, W] clip window.
LossTerms rollout_loss(const torch::Tensor& targets, const RolloutResult& rollout, double beta);

// Teacher-forced pass over the first config.T frames followed by rollout_loss.
LossTerms sequence_loss(const ClipBatch& batch, TpgModel& model, const TrainingConfig& config,
                        NoiseSource& noise);

std::unique_ptr<torch::optim::Adam> make_optimizer(TpgModel& model, const TrainingConfig& config);

// One Adam update on sequence_loss (with global-norm clipping). Returns the pre-update loss.
LossBreakdown train_step(TpgModel& model, const ClipBatch& batch, const TrainingConfig& config,
                         torch::optim::Adam& optimizer, NoiseSource& noise);

}  // namespace tpg
