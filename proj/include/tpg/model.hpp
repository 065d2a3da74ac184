#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

#include "tpg/latent.hpp"

namespace tpg {

struct ModelConfig {
  int64_t frame_size = 64;
  int64_t channels = 3;
  int64_t content_feature_dim = 128;
  int64_t motion_feature_dim = 128;
  int64_t latent_dim = 16;
  int64_t predictor_feature_dim = 128;
  int64_t recurrent_width = 256;
  int64_t predictor_layers = 2;
  int64_t gaussian_layers = 1;
  int64_t num_classes = 4;
  // Per-block channel widths of the content encoder; the decoder mirrors them.
  std::vector<int64_t> encoder_widths{32, 64, 128, 256};
  int64_t content_convs_per_block = 2;
  // Motion encoder widths are encoder_widths / motion_width_divisor, one conv per block.
  int64_t motion_width_divisor = 8;

  // Throws ArgumentError on non-positive sizes or a frame size the blocks cannot halve.
  void validate() const;
  std::vector<int64_t> motion_widths() const;
  int64_t bottleneck_size() const;  // spatial size after the last pooling
  int64_t latent_width(const LatentMask& mask) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EncoderFeatures {
  torch::Tensor h;                   // [B, content_feature_dim]
  std::vector<torch::Tensor> skips;  // pre-pool maps, finest first: [B, w_i, S/2^i, S/2^i]
};

enum class GaussianCore { posterior_content, posterior_motion, prior_content, prior_motion };

const char* to_string(GaussianCore core);

// conv(3x3) -> GroupNorm -> LeakyReLU(0.2), repeated, then the caller pools.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int64_t in_channels, int64_t out_channels, int64_t convs);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::Sequential layers_;
};
TORCH_MODULE(ConvBlock);

class ContentEncoderImpl : public torch::nn::Module {
 public:
  explicit ContentEncoderImpl(const ModelConfig& config);
  EncoderFeatures forward(const torch::Tensor& frames);  // [B, C, S, S]

 private:
  ModelConfig config_;
  std::vector<ConvBlock> blocks_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ContentEncoder);

class MotionEncoderImpl : public torch::nn::Module {
 public:
  explicit MotionEncoderImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& delta);  // [B, 1, S, S] -> [B, motion_feature_dim]

 private:
  ModelConfig config_;
  std::vector<ConvBlock> blocks_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(MotionEncoder);

// Linear embedding -> stacked LSTM cells -> separate mean / log-variance heads.
class GaussianLstmImpl : public torch::nn::Module {
 public:
  GaussianLstmImpl(int64_t input_dim, int64_t width, int64_t latent_dim, int64_t layers);
  std::pair<LatentGaussian, RecurrentState> step(const torch::Tensor& feature,
                                                 const RecurrentState& state);
  RecurrentState initial_state(int64_t batch, const torch::TensorOptions& options) const;
  int64_t input_dim() const { return input_dim_; }

 private:
  int64_t input_dim_;
  int64_t width_;
  torch::nn::Linear embed_{nullptr};
  std::vector<torch::nn::LSTMCell> cells_;
  torch::nn::Linear mean_head_{nullptr};
  torch::nn::Linear log_var_head_{nullptr};
};
TORCH_MODULE(GaussianLstm);

// g_t = tanh(W * LSTM(embed([h_{t-1}, z_t])) + b)
class PredictorImpl : public torch::nn::Module {
 public:
  PredictorImpl(int64_t input_dim, int64_t width, int64_t output_dim, int64_t layers);
  std::pair<torch::Tensor, RecurrentState> step(const torch::Tensor& input,
                                                const RecurrentState& state);
  RecurrentState initial_state(int64_t batch, const torch::TensorOptions& options) const;
  int64_t input_dim() const { return input_dim_; }

 private:
  int64_t input_dim_;
  int64_t width_;
  torch::nn::Linear embed_{nullptr};
  std::vector<torch::nn::LSTMCell> cells_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Predictor);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& g, const std::vector<torch::Tensor>& skips);

 private:
  ModelConfig config_;
  torch::nn::Linear project_{nullptr};
  std::vector<ConvBlock> blocks_;  // coarsest first
  torch::nn::Conv2d to_pixels_{nullptr};
};
TORCH_MODULE(Decoder);

// Every learnable component of one model variant. Parts of the latent that the
// mask switches off have no encoder/core (motion) or no core (content).
class TpgModelImpl : public torch::nn::Module {
 public:
  TpgModelImpl(const ModelConfig& config, const LatentMask& mask);

  const ModelConfig& config() const { return config_; }
  const LatentMask& mask() const { return mask_; }
  bool has_core(GaussianCore core) const;

  EncoderFeatures encode_content(const torch::Tensor& frames);
  torch::Tensor encode_motion(const torch::Tensor& delta);

  // Only posterior cores are accepted; ArgumentError otherwise.
  std::pair<LatentGaussian, RecurrentState> posterior_step(GaussianCore core,
                                                           const torch::Tensor& feature,
                                                           const RecurrentState& state);
  // Only prior cores are accepted; the feature is from time t-1.
  std::pair<LatentGaussian, RecurrentState> prior_step(GaussianCore core,
                                                       const torch::Tensor& feature_prev,
                                                       const RecurrentState& state);
  std::pair<torch::Tensor, RecurrentState> predictor_step(const torch::Tensor& h_prev,
                                                          const TernaryLatent& z,
                                                          const RecurrentState& state);
  torch::Tensor decode(const torch::Tensor& g, const std::vector<torch::Tensor>& skips);

  RecurrentState initial_state(GaussianCore core, int64_t batch) const;
  RecurrentState initial_predictor_state(int64_t batch) const;

  // Deterministic fan-in scaled uniform initialisation; forget-gate bias 1.
  void initialize(uint64_t seed);

  torch::TensorOptions tensor_options() const;

 private:
  GaussianLstm& core(GaussianCore which);
  const GaussianLstm& core(GaussianCore which) const;

  ModelConfig config_;
  LatentMask mask_;
  ContentEncoder content_encoder_{nullptr};
  MotionEncoder motion_encoder_{nullptr};
  GaussianLstm posterior_content_{nullptr};
  GaussianLstm posterior_motion_{nullptr};
  GaussianLstm prior_content_{nullptr};
  GaussianLstm prior_motion_{nullptr};
  Predictor predictor_{nullptr};
  Decoder decoder_{nullptr};
};
TORCH_MODULE(TpgModel);

}  // namespace tpg
