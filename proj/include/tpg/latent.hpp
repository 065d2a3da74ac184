#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace tpg {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

// Diagonal Gaussian over one latent part, batch-leading: mean/log_var are [B, latent_dim].
struct LatentGaussian {
  torch::Tensor mean;
  torch::Tensor log_var;

  int64_t width() const { return mean.size(-1); }
  torch::Tensor variance() const { return log_var.exp(); }
  LatentGaussian detached() const { return {mean.detach(), log_var.detach()}; }
};

// Which parts of the ternary latent exist in a model variant.
struct LatentMask {
  bool content = true;
  bool motion = true;
  bool label = true;

  int active_real_parts() const { return int(content) + int(motion); }
  std::string describe() const;

  friend bool operator==(const LatentMask&, const LatentMask&) = default;
};

// z_t = [C_t, M_t, L_t], omitting inactive parts. Each present part is [B, width].
struct TernaryLatent {
  torch::Tensor content;
  torch::Tensor motion;
  torch::Tensor label;
  LatentMask mask;

  torch::Tensor concatenated() const;
  int64_t width() const;
};

// Throws ShapeError on width mismatches and ArgumentError when an active label is not one-hot.
TernaryLatent assemble_latent(const torch::Tensor& content, const torch::Tensor& motion,
                              const torch::Tensor& label, const LatentMask& mask,
                              int64_t latent_dim, int64_t num_classes);

// Hidden and cell tensors per layer, each [B, width]. Zero at clip start.
struct RecurrentState {
  std::vector<torch::Tensor> hidden;
  std::vector<torch::Tensor> cell;

  static RecurrentState zeros(int64_t layers, int64_t batch, int64_t width,
                              const torch::TensorOptions& options = {});
  int64_t layers() const { return static_cast<int64_t>(hidden.size()); }
  RecurrentState clone() const;
};

}  // namespace tpg
