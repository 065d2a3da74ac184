#include "tpg/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include <ATen/CPUGeneratorImpl.h>

#include "tpg/errors.hpp"

namespace tpg {

namespace F = torch::nn::functional;

namespace {

constexpr double kLeakySlope = 0.2;

int64_t group_count(int64_t channels) { return std::gcd(channels, int64_t{8}); }

void require_positive(int64_t v, const char* name) {
  if (v <= 0) throw ArgumentError(std::string("ModelConfig: ") + name + " must be positive");
}

void check_image_batch(const torch::Tensor& x, int64_t channels, int64_t size, const char* who) {
  if (!x.defined() || x.dim() != 4 || x.size(1) != channels || x.size(2) != size ||
      x.size(3) != size) {
    throw ShapeError(std::string(who) + ": expected [B, " + std::to_string(channels) + ", " +
                     std::to_string(size) + ", " + std::to_string(size) + "], got " +
                     (x.defined() ? c10::str(x.sizes()) : std::string("undefined")));
  }
}

void check_vector_batch(const torch::Tensor& x, int64_t width, const char* who) {
  if (!x.defined() || x.dim() != 2 || x.size(1) != width) {
    throw ShapeError(std::string(who) + ": expected [B, " + std::to_string(width) + "], got " +
                     (x.defined() ? c10::str(x.sizes()) : std::string("undefined")));
  }
}

RecurrentState run_cells(std::vector<torch::nn::LSTMCell>& cells, torch::Tensor x,
                         const RecurrentState& state) {
  if (state.layers() != static_cast<int64_t>(cells.size())) {
    throw ShapeError("recurrent state has " + std::to_string(state.layers()) + " layers, core has " +
                     std::to_string(cells.size()));
  }
  RecurrentState next;
  for (size_t l = 0; l < cells.size(); ++l) {
    auto [h, c] = cells[l]->forward(x, std::make_tuple(state.hidden[l], state.cell[l]));
    next.hidden.push_back(h);
    next.cell.push_back(c);
    x = h;
  }
  return next;
}

}  // namespace

const char* to_string(GaussianCore core) {
  switch (core) {
    case GaussianCore::posterior_content: return "posterior_content";
    case GaussianCore::posterior_motion: return "posterior_motion";
    case GaussianCore::prior_content: return "prior_content";
    case GaussianCore::prior_motion: return "prior_motion";
  }
  return "unknown";
}

void ModelConfig::validate() const {
  require_positive(frame_size, "frame_size");
  require_positive(content_feature_dim, "content_feature_dim");
  require_positive(motion_feature_dim, "motion_feature_dim");
  require_positive(latent_dim, "latent_dim");
  require_positive(predictor_feature_dim, "predictor_feature_dim");
  require_positive(recurrent_width, "recurrent_width");
  require_positive(predictor_layers, "predictor_layers");
  require_positive(gaussian_layers, "gaussian_layers");
  require_positive(num_classes, "num_classes");
  require_positive(content_convs_per_block, "content_convs_per_block");
  require_positive(motion_width_divisor, "motion_width_divisor");
  if (channels != 1 && channels != 3) throw ArgumentError("ModelConfig: channels must be 1 or 3");
  if (encoder_widths.empty()) throw ArgumentError("ModelConfig: encoder_widths is empty");
  for (auto w : encoder_widths) require_positive(w, "encoder width");
  const int64_t scale = int64_t{1} << encoder_widths.size();
  if (frame_size % scale != 0) {
    throw ArgumentError("ModelConfig: frame_size " + std::to_string(frame_size) +
                        " is not divisible by 2^" + std::to_string(encoder_widths.size()));
  }
}

std::vector<int64_t> ModelConfig::motion_widths() const {
  std::vector<int64_t> out;
  for (auto w : encoder_widths) out.push_back(std::max<int64_t>(1, w / motion_width_divisor));
  return out;
}

int64_t ModelConfig::bottleneck_size() const {
  return frame_size >> static_cast<int64_t>(encoder_widths.size());
}

int64_t ModelConfig::latent_width(const LatentMask& mask) const {
  return latent_dim * mask.active_real_parts() + (mask.label ? num_classes : 0);
}

// ---------------------------------------------------------------------------

ConvBlockImpl::ConvBlockImpl(int64_t in_channels, int64_t out_channels, int64_t convs) {
  for (int64_t i = 0; i < convs; ++i) {
    const int64_t in = i == 0 ? in_channels : out_channels;
    layers_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out_channels, 3).padding(1)));
    layers_->push_back(
        torch::nn::GroupNorm(torch::nn::GroupNormOptions(group_count(out_channels), out_channels)));
    layers_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
  }
  register_module("layers", layers_);
}

torch::Tensor ConvBlockImpl::forward(torch::Tensor x) { return layers_->forward(x); }

ContentEncoderImpl::ContentEncoderImpl(const ModelConfig& config) : config_(config) {
  const auto& widths = config_.encoder_widths;
  for (size_t i = 0; i < widths.size(); ++i) {
    const int64_t in = i == 0 ? config_.channels : widths[i - 1];
    blocks_.push_back(register_module("block" + std::to_string(i),
                                      ConvBlock(in, widths[i], config_.content_convs_per_block)));
  }
  const int64_t s = config_.bottleneck_size();
  head_ = register_module("head", torch::nn::Linear(widths.back() * s * s, config_.content_feature_dim));
}

EncoderFeatures ContentEncoderImpl::forward(const torch::Tensor& frames) {
  check_image_batch(frames, config_.channels, config_.frame_size, "encode_content");
  EncoderFeatures out;
  auto x = frames;
  for (auto& block : blocks_) {
    x = block->forward(x);
    out.skips.push_back(x);
    x = F::max_pool2d(x, F::MaxPool2dFuncOptions(2));
  }
  out.h = torch::tanh(head_->forward(x.flatten(1)));
  return out;
}

MotionEncoderImpl::MotionEncoderImpl(const ModelConfig& config) : config_(config) {
  const auto widths = config_.motion_widths();
  for (size_t i = 0; i < widths.size(); ++i) {
    const int64_t in = i == 0 ? 1 : widths[i - 1];
    blocks_.push_back(register_module("block" + std::to_string(i), ConvBlock(in, widths[i], 1)));
  }
  const int64_t s = config_.bottleneck_size();
  head_ = register_module("head", torch::nn::Linear(widths.back() * s * s, config_.motion_feature_dim));
}

torch::Tensor MotionEncoderImpl::forward(const torch::Tensor& delta) {
  check_image_batch(delta, 1, config_.frame_size, "encode_motion");
  auto x = delta;
  for (auto& block : blocks_) {
    x = F::max_pool2d(block->forward(x), F::MaxPool2dFuncOptions(2));
  }
  return torch::tanh(head_->forward(x.flatten(1)));
}

GaussianLstmImpl::GaussianLstmImpl(int64_t input_dim, int64_t width, int64_t latent_dim,
                                   int64_t layers)
    : input_dim_(input_dim), width_(width) {
  embed_ = register_module("embed", torch::nn::Linear(input_dim, width));
  for (int64_t l = 0; l < layers; ++l) {
    cells_.push_back(register_module("lstm" + std::to_string(l), torch::nn::LSTMCell(width, width)));
  }
  mean_head_ = register_module("mean", torch::nn::Linear(width, latent_dim));
  log_var_head_ = register_module("log_var", torch::nn::Linear(width, latent_dim));
}

std::pair<LatentGaussian, RecurrentState> GaussianLstmImpl::step(const torch::Tensor& feature,
                                                                 const RecurrentState& state) {
  check_vector_batch(feature, input_dim_, "gaussian core");
  auto next = run_cells(cells_, embed_->forward(feature), state);
  const auto& out = next.hidden.back();
  LatentGaussian g{mean_head_->forward(out),
                   log_var_head_->forward(out).clamp(kLogVarMin, kLogVarMax)};
  return {std::move(g), std::move(next)};
}

RecurrentState GaussianLstmImpl::initial_state(int64_t batch,
                                               const torch::TensorOptions& options) const {
  return RecurrentState::zeros(static_cast<int64_t>(cells_.size()), batch, width_, options);
}

PredictorImpl::PredictorImpl(int64_t input_dim, int64_t width, int64_t output_dim, int64_t layers)
    : input_dim_(input_dim), width_(width) {
  embed_ = register_module("embed", torch::nn::Linear(input_dim, width));
  for (int64_t l = 0; l < layers; ++l) {
    cells_.push_back(register_module("lstm" + std::to_string(l), torch::nn::LSTMCell(width, width)));
  }
  head_ = register_module("head", torch::nn::Linear(width, output_dim));
}

std::pair<torch::Tensor, RecurrentState> PredictorImpl::step(const torch::Tensor& input,
                                                             const RecurrentState& state) {
  check_vector_batch(input, input_dim_, "predictor");
  auto next = run_cells(cells_, embed_->forward(input), state);
  auto g = torch::tanh(head_->forward(next.hidden.back()));
  return {std::move(g), std::move(next)};
}

RecurrentState PredictorImpl::initial_state(int64_t batch, const torch::TensorOptions& options) const {
  return RecurrentState::zeros(static_cast<int64_t>(cells_.size()), batch, width_, options);
}

DecoderImpl::DecoderImpl(const ModelConfig& config) : config_(config) {
  const auto& widths = config_.encoder_widths;
  const int64_t n = static_cast<int64_t>(widths.size());
  const int64_t s = config_.bottleneck_size();
  project_ = register_module("project", torch::nn::Linear(config_.predictor_feature_dim, widths.back() * s * s));
  int64_t current = widths.back();
  for (int64_t i = n - 1; i >= 0; --i) {
    const int64_t out = i > 0 ? widths[i - 1] : widths[0];
    blocks_.push_back(register_module("block" + std::to_string(i),
                                      ConvBlock(current + widths[i], out, config_.content_convs_per_block)));
    current = out;
  }
  to_pixels_ = register_module(
      "to_pixels", torch::nn::Conv2d(torch::nn::Conv2dOptions(widths[0], config_.channels, 1)));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& g, const std::vector<torch::Tensor>& skips) {
  check_vector_batch(g, config_.predictor_feature_dim, "decode");
  const auto& widths = config_.encoder_widths;
  const int64_t n = static_cast<int64_t>(widths.size());
  if (static_cast<int64_t>(skips.size()) != n) {
    throw ShapeError("decode: expected " + std::to_string(n) + " skip maps, got " +
                     std::to_string(skips.size()));
  }
  const int64_t batch = g.size(0);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t size = config_.frame_size >> i;
    const auto& skip = skips[static_cast<size_t>(i)];
    if (!skip.defined() || skip.dim() != 4 || skip.size(0) != batch || skip.size(1) != widths[i] ||
        skip.size(2) != size || skip.size(3) != size) {
      throw ShapeError("decode: skip " + std::to_string(i) + " must be [" + std::to_string(batch) +
                       ", " + std::to_string(widths[i]) + ", " + std::to_string(size) + ", " +
                       std::to_string(size) + "]");
    }
  }
  const int64_t s = config_.bottleneck_size();
  auto x = F::leaky_relu(project_->forward(g), F::LeakyReLUFuncOptions().negative_slope(kLeakySlope))
               .view({batch, widths.back(), s, s});
  for (int64_t k = 0; k < n; ++k) {
    const int64_t i = n - 1 - k;
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    x = torch::cat({x, skips[static_cast<size_t>(i)]}, 1);
    x = blocks_[static_cast<size_t>(k)]->forward(x);
  }
  return torch::sigmoid(to_pixels_->forward(x));
}

// ---------------------------------------------------------------------------

TpgModelImpl::TpgModelImpl(const ModelConfig& config, const LatentMask& mask)
    : config_(config), mask_(mask) {
  config_.validate();
  if (mask_.active_real_parts() == 0) {
    throw ArgumentError("model variant needs a content or motion latent part");
  }
  const int64_t w = config_.recurrent_width;
  const int64_t layers = config_.gaussian_layers;
  content_encoder_ = register_module("content_encoder", ContentEncoder(config_));
  if (mask_.motion) motion_encoder_ = register_module("motion_encoder", MotionEncoder(config_));
  if (mask_.content) {
    posterior_content_ = register_module(
        "posterior_content", GaussianLstm(config_.content_feature_dim, w, config_.latent_dim, layers));
    prior_content_ = register_module(
        "prior_content", GaussianLstm(config_.content_feature_dim, w, config_.latent_dim, layers));
  }
  if (mask_.motion) {
    posterior_motion_ = register_module(
        "posterior_motion", GaussianLstm(config_.motion_feature_dim, w, config_.latent_dim, layers));
    prior_motion_ = register_module(
        "prior_motion", GaussianLstm(config_.motion_feature_dim, w, config_.latent_dim, layers));
  }
  predictor_ = register_module(
      "predictor", Predictor(config_.content_feature_dim + config_.latent_width(mask_), w,
                             config_.predictor_feature_dim, config_.predictor_layers));
  decoder_ = register_module("decoder", Decoder(config_));
}

bool TpgModelImpl::has_core(GaussianCore which) const {
  switch (which) {
    case GaussianCore::posterior_content:
    case GaussianCore::prior_content: return mask_.content;
    case GaussianCore::posterior_motion:
    case GaussianCore::prior_motion: return mask_.motion;
  }
  return false;
}

GaussianLstm& TpgModelImpl::core(GaussianCore which) {
  return const_cast<GaussianLstm&>(static_cast<const TpgModelImpl*>(this)->core(which));
}

const GaussianLstm& TpgModelImpl::core(GaussianCore which) const {
  if (!has_core(which)) {
    throw ArgumentError(std::string("variant ") + mask_.describe() + " has no " + to_string(which) +
                        " core");
  }
  switch (which) {
    case GaussianCore::posterior_content: return posterior_content_;
    case GaussianCore::posterior_motion: return posterior_motion_;
    case GaussianCore::prior_content: return prior_content_;
    case GaussianCore::prior_motion: return prior_motion_;
  }
  throw ArgumentError("unknown core");
}

EncoderFeatures TpgModelImpl::encode_content(const torch::Tensor& frames) {
  return content_encoder_->forward(frames);
}

torch::Tensor TpgModelImpl::encode_motion(const torch::Tensor& delta) {
  if (!motion_encoder_) throw ArgumentError("variant " + mask_.describe() + " has no motion encoder");
  return motion_encoder_->forward(delta);
}

std::pair<LatentGaussian, RecurrentState> TpgModelImpl::posterior_step(GaussianCore which,
                                                                       const torch::Tensor& feature,
                                                                       const RecurrentState& state) {
  if (which != GaussianCore::posterior_content && which != GaussianCore::posterior_motion) {
    throw ArgumentError(std::string("posterior_step called with ") + to_string(which));
  }
  return core(which)->step(feature, state);
}

std::pair<LatentGaussian, RecurrentState> TpgModelImpl::prior_step(GaussianCore which,
                                                                   const torch::Tensor& feature_prev,
                                                                   const RecurrentState& state) {
  if (which != GaussianCore::prior_content && which != GaussianCore::prior_motion) {
    throw ArgumentError(std::string("prior_step called with ") + to_string(which));
  }
  return core(which)->step(feature_prev, state);
}

std::pair<torch::Tensor, RecurrentState> TpgModelImpl::predictor_step(const torch::Tensor& h_prev,
                                                                      const TernaryLatent& z,
                                                                      const RecurrentState& state) {
  check_vector_batch(h_prev, config_.content_feature_dim, "predictor_step h_prev");
  if (!(z.mask == mask_)) throw ArgumentError("predictor_step: latent mask differs from the model's");
  auto zc = z.concatenated();
  check_vector_batch(zc, config_.latent_width(mask_), "predictor_step z");
  return predictor_->step(torch::cat({h_prev, zc}, 1), state);
}

torch::Tensor TpgModelImpl::decode(const torch::Tensor& g, const std::vector<torch::Tensor>& skips) {
  return decoder_->forward(g, skips);
}

RecurrentState TpgModelImpl::initial_state(GaussianCore which, int64_t batch) const {
  return core(which)->initial_state(batch, tensor_options());
}

RecurrentState TpgModelImpl::initial_predictor_state(int64_t batch) const {
  return predictor_->initial_state(batch, tensor_options());
}

torch::TensorOptions TpgModelImpl::tensor_options() const {
  const auto params = parameters();
  return torch::TensorOptions().dtype(params.front().scalar_type()).device(params.front().device());
}

void TpgModelImpl::initialize(uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto fill = [&](torch::Tensor& t, double bound) {
    if (t.defined()) t.uniform_(-bound, bound, gen);
  };
  for (const auto& m : modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      const auto& w = conv->weight;
      const double bound = 1.0 / std::sqrt(static_cast<double>(w.size(1) * w.size(2) * w.size(3)));
      fill(conv->weight, bound);
      fill(conv->bias, bound);
    } else if (auto* lin = m->as<torch::nn::Linear>()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(lin->weight.size(1)));
      fill(lin->weight, bound);
      fill(lin->bias, bound);
    } else if (auto* cell = m->as<torch::nn::LSTMCell>()) {
      const int64_t hidden = cell->options.hidden_size();
      const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
      fill(cell->weight_ih, bound);
      fill(cell->weight_hh, bound);
      cell->bias_ih.zero_();
      cell->bias_hh.zero_();
      // gate order (input, forget, cell, output)
      cell->bias_ih.narrow(0, hidden, hidden).fill_(1.0);
    } else if (auto* norm = m->as<torch::nn::GroupNorm>()) {
      norm->weight.fill_(1.0);
      norm->bias.zero_();
    }
  }
}

}  // namespace tpg
