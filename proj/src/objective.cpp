#include "tpg/objective.hpp"

#include "tpg/errors.hpp"

namespace tpg {

void TrainingConfig::validate() const {
  if (t_p < 1 || t_p >= T) {
    throw ArgumentError("TrainingConfig: need 1 <= t_p < T (t_p=" + std::to_string(t_p) +
                        ", T=" + std::to_string(T) + ")");
  }
  if (beta < 0.0) throw ArgumentError("TrainingConfig: beta must be >= 0");
  if (!(learning_rate > 0.0)) throw ArgumentError("TrainingConfig: learning_rate must be > 0");
  if (epochs < 0) throw ArgumentError("TrainingConfig: epochs must be >= 0");
  if (batch_size < 1) throw ArgumentError("TrainingConfig: batch_size must be >= 1");
  if (checkpoint_every < 1) throw ArgumentError("TrainingConfig: checkpoint_every must be >= 1");
}

torch::Tensor reparameterize(const LatentGaussian& gaussian, const torch::Tensor& noise) {
  if (noise.sizes() != gaussian.mean.sizes()) {
    throw ShapeError("reparameterize: noise shape " + c10::str(noise.sizes()) +
                     " does not match mean shape " + c10::str(gaussian.mean.sizes()));
  }
  return gaussian.mean + torch::exp(0.5 * gaussian.log_var) * noise;
}

torch::Tensor kl_diag_gaussian(const LatentGaussian& q, const LatentGaussian& p) {
  if (q.mean.sizes() != p.mean.sizes() || q.log_var.sizes() != p.log_var.sizes() ||
      q.mean.sizes() != q.log_var.sizes()) {
    throw ShapeError("kl_diag_gaussian: parameter shapes differ");
  }
  const auto diff = q.mean - p.mean;
  const auto terms = p.log_var - q.log_var + torch::exp(q.log_var - p.log_var) +
                     diff * diff * torch::exp(-p.log_var) - 1.0;
  return 0.5 * terms.sum(-1);
}

LossBreakdown LossTerms::breakdown() const {
  LossBreakdown b;
  b.recon_l1 = recon_l1.item<double>();
  b.kl_content = kl_content.item<double>();
  b.kl_motion = kl_motion.item<double>();
  b.total = total.item<double>();
  b.beta = beta;
  return b;
}

LossTerms rollout_loss(const torch::Tensor& targets, const RolloutResult& rollout, double beta) {
  const auto generated = rollout.generated();
  if (targets.dim() != 5 || targets.size(1) < 2) {
    throw ShapeError("rollout_loss: targets must be [B, T, C, H, W] with T >= 2");
  }
  const auto truth = targets.narrow(1, 1, targets.size(1) - 1).to(generated.options());
  if (truth.sizes() != generated.sizes()) {
    throw ShapeError("rollout_loss: generated frames " + c10::str(generated.sizes()) +
                     " do not cover targets " + c10::str(truth.sizes()));
  }
  const int64_t B = generated.size(0);
  LossTerms out;
  out.beta = beta;
  out.recon_l1 = (generated - truth).abs().mean({2, 3, 4}).sum(1).mean();

  auto zero = torch::zeros({B}, generated.options());
  auto kl_c = zero;
  auto kl_m = zero;
  for (const auto& step : rollout.latents) {
    if (step.posterior_content.mean.defined()) {
      kl_c = kl_c + kl_diag_gaussian(step.posterior_content, step.prior_content);
    }
    if (step.posterior_motion.mean.defined()) {
      kl_m = kl_m + kl_diag_gaussian(step.posterior_motion, step.prior_motion);
    }
  }
  out.kl_content = kl_c.mean();
  out.kl_motion = kl_m.mean();
  out.total = out.recon_l1 + beta * (out.kl_content + out.kl_motion);
  return out;
}

LossTerms sequence_loss(const ClipBatch& batch, TpgModel& model, const TrainingConfig& config,
                        NoiseSource& noise) {
  if (batch.frames.dim() != 5) throw ShapeError("sequence_loss: frames must be [B, T, C, H, W]");
  if (batch.length() < config.T) {
    throw ArgumentError("sequence_loss: clips have " + std::to_string(batch.length()) +
                        " frames, need T=" + std::to_string(config.T));
  }
  ClipBatch window = batch;
  window.frames = batch.frames.narrow(1, 0, config.T).to(model->tensor_options());
  const auto rollout = teacher_forced_pass(model, window, config.t_p, noise);
  return rollout_loss(window.frames, rollout, config.beta);
}

std::unique_ptr<torch::optim::Adam> make_optimizer(TpgModel& model, const TrainingConfig& config) {
  auto options = torch::optim::AdamOptions(config.learning_rate)
                     .betas({config.adam_beta1, config.adam_beta2})
                     .eps(config.epsilon);
  return std::make_unique<torch::optim::Adam>(model->parameters(), options);
}

LossBreakdown train_step(TpgModel& model, const ClipBatch& batch, const TrainingConfig& config,
                         torch::optim::Adam& optimizer, NoiseSource& noise) {
  model->train();
  optimizer.zero_grad();
  auto terms = sequence_loss(batch, model, config, noise);
  terms.total.backward();
  if (config.grad_clip_norm > 0.0) {
    torch::nn::utils::clip_grad_norm_(model->parameters(), config.grad_clip_norm);
  }
  optimizer.step();
  return terms.breakdown();
}

}  // namespace tpg
