#include "tpg/rollout.hpp"

#include <algorithm>
#include <cctype>

#include "tpg/errors.hpp"
#include "tpg/objective.hpp"

namespace tpg {

namespace {

struct VariantRow {
  VariantName name;
  const char* label;
  const char* stem;
  LatentMask mask;
};

// clang-format off
constexpr VariantRow kVariants[] = {
    {VariantName::TPG_VAE,     "TPG-VAE", "TPG-VAE",     {true,  true,  true}},
    {VariantName::ML_VAE,      "ML-VAE",  "ML-VAE",      {false, true,  true}},
    {VariantName::CL_VAE,      "CL-VAE",  "CL-VAE",      {true,  false, true}},
    {VariantName::CM_VAE,      "CM-VAE",  "CM-VAE",      {true,  true,  false}},
    {VariantName::M_VAE,       "M-VAE",   "M-VAE",       {false, true,  false}},
    {VariantName::SVG_LP_STAR, "SVG-LP*", "SVG-LP-STAR", {true,  false, false}},
};
// clang-format on

const VariantRow& row(VariantName name) {
  for (const auto& r : kVariants) {
    if (r.name == name) return r;
  }
  throw LookupError("unknown variant");
}

std::string normalise(std::string_view text) {
  std::string out;
  for (char c : text) out.push_back(c == '_' ? '-' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

void check_clip_tensor(const torch::Tensor& x, const char* who) {
  if (!x.defined() || x.dim() != 5) throw ShapeError(std::string(who) + ": expected [B, T, C, H, W]");
}

torch::Tensor motion_features(TpgModel& model, const torch::Tensor& frames) {
  const auto B = frames.size(0);
  const auto T = frames.size(1);
  const auto H = frames.size(3);
  const auto W = frames.size(4);
  auto diffs = grayscale_difference(frames.narrow(1, 0, T - 1), frames.narrow(1, 1, T - 1));
  // The first frame has no predecessor: its difference is zero.
  auto deltas = torch::cat({torch::zeros_like(diffs.narrow(1, 0, 1)), diffs}, 1);
  return model->encode_motion(deltas.reshape({B * T, 1, H, W})).view({B, T, -1});
}

}  // namespace

VariantSpec VariantSpec::named(VariantName name) { return {name, row(name).mask}; }

VariantSpec VariantSpec::parse(std::string_view text) {
  const auto key = normalise(text);
  for (const auto& r : kVariants) {
    if (key == r.label || key == r.stem) return {r.name, r.mask};
  }
  throw LookupError("unknown variant '" + std::string(text) + "'");
}

const std::vector<VariantName>& VariantSpec::all() {
  static const std::vector<VariantName> names{VariantName::TPG_VAE, VariantName::ML_VAE,
                                              VariantName::CL_VAE,  VariantName::CM_VAE,
                                              VariantName::M_VAE,   VariantName::SVG_LP_STAR};
  return names;
}

std::string VariantSpec::label() const { return row(name).label; }
std::string VariantSpec::file_stem() const { return row(name).stem; }

void VariantSpec::validate() const {
  if (mask.active_real_parts() == 0) {
    throw ArgumentError("variant " + label() + ": a label-only or empty latent is not a valid variant");
  }
}

TpgModel make_model(const ModelConfig& config, const VariantSpec& variant, uint64_t seed) {
  variant.validate();
  TpgModel model(config, variant.mask);
  model->initialize(seed);
  return model;
}

ClipBatch ClipBatch::to(const torch::TensorOptions& options) const {
  ClipBatch out = *this;
  out.frames = frames.to(options);
  if (labels.defined()) out.labels = labels.to(options);
  return out;
}

ClipBatch ClipBatch::index(const std::vector<int64_t>& rows) const {
  auto idx = torch::tensor(rows, torch::kLong);
  ClipBatch out;
  out.frames = frames.index_select(0, idx);
  if (labels.defined()) out.labels = labels.index_select(0, idx);
  for (auto r : rows) {
    if (r < static_cast<int64_t>(clip_ids.size())) out.clip_ids.push_back(clip_ids[static_cast<size_t>(r)]);
  }
  return out;
}

ClipBatch make_batch(const std::vector<const VideoClip*>& clips, int64_t start, int64_t length,
                     int num_classes) {
  if (clips.empty()) throw ArgumentError("make_batch: no clips");
  ClipBatch batch;
  std::vector<torch::Tensor> frames;
  std::vector<torch::Tensor> labels;
  for (const auto* clip : clips) {
    if (start < 0 || start + length > clip->length()) {
      throw ArgumentError("make_batch: clip '" + clip->clip_id + "' has " +
                          std::to_string(clip->length()) + " frames, window needs " +
                          std::to_string(start + length));
    }
    frames.push_back(clip->frames.narrow(0, start, length));
    labels.push_back(one_hot_label(clip->gesture, num_classes));
    batch.clip_ids.push_back(clip->clip_id);
  }
  batch.frames = torch::stack(frames);
  batch.labels = torch::stack(labels);
  return batch;
}

ClipBatch make_batch(const std::vector<VideoClip>& clips, int64_t start, int64_t length,
                     int num_classes) {
  std::vector<const VideoClip*> ptrs;
  for (const auto& c : clips) ptrs.push_back(&c);
  return make_batch(ptrs, start, length, num_classes);
}

std::string to_string(RolloutMode mode) {
  switch (mode) {
    case RolloutMode::teacher_forced: return "teacher_forced";
    case RolloutMode::prior_mean: return "prior_mean";
    case RolloutMode::sampled: return "sampled";
  }
  return "unknown";
}

torch::Tensor RolloutResult::generated() const {
  if (reconstructions.defined() && reconstructions.size(1) > 0) {
    return torch::cat({reconstructions, predicted}, 1);
  }
  return predicted;
}

// ---------------------------------------------------------------------------

RolloutResult teacher_forced_pass(TpgModel& model, const ClipBatch& batch, int64_t t_p,
                                  NoiseSource& noise) {
  const auto& cfg = model->config();
  const auto& mask = model->mask();
  check_clip_tensor(batch.frames, "teacher_forced_pass");
  const auto opts = model->tensor_options();
  const auto x = batch.frames.to(opts);
  const int64_t B = x.size(0);
  const int64_t T = x.size(1);
  if (T < 2) throw ArgumentError("teacher_forced_pass: need at least 2 frames");
  if (t_p < 1 || t_p >= T) {
    throw ArgumentError("teacher_forced_pass: t_p must satisfy 1 <= t_p < T");
  }

  auto enc = model->encode_content(x.reshape({B * T, x.size(2), x.size(3), x.size(4)}));
  const auto h = enc.h.view({B, T, -1});
  torch::Tensor hm;
  if (mask.motion) hm = motion_features(model, x);
  torch::Tensor labels;
  if (mask.label) labels = batch.labels.to(opts);

  RecurrentState post_c, prior_c, post_m, prior_m;
  if (mask.content) {
    post_c = model->initial_state(GaussianCore::posterior_content, B);
    prior_c = model->initial_state(GaussianCore::prior_content, B);
  }
  if (mask.motion) {
    post_m = model->initial_state(GaussianCore::posterior_motion, B);
    prior_m = model->initial_state(GaussianCore::prior_motion, B);
  }
  auto pred_state = model->initial_predictor_state(B);

  RolloutResult result;
  result.mode = RolloutMode::teacher_forced;
  std::vector<torch::Tensor> gs;
  for (int64_t i = 1; i < T; ++i) {
    StepLatents step;
    torch::Tensor c, m;
    if (mask.content) {
      std::tie(step.posterior_content, post_c) =
          model->posterior_step(GaussianCore::posterior_content, h.select(1, i), post_c);
      std::tie(step.prior_content, prior_c) =
          model->prior_step(GaussianCore::prior_content, h.select(1, i - 1), prior_c);
      c = reparameterize(step.posterior_content, noise.normal(step.posterior_content.mean.sizes(), opts));
    }
    if (mask.motion) {
      std::tie(step.posterior_motion, post_m) =
          model->posterior_step(GaussianCore::posterior_motion, hm.select(1, i), post_m);
      std::tie(step.prior_motion, prior_m) =
          model->prior_step(GaussianCore::prior_motion, hm.select(1, i - 1), prior_m);
      m = reparameterize(step.posterior_motion, noise.normal(step.posterior_motion.mean.sizes(), opts));
    }
    const auto z = assemble_latent(c, m, labels, mask, cfg.latent_dim, cfg.num_classes);
    step.label = z.label;
    torch::Tensor g;
    std::tie(g, pred_state) = model->predictor_step(h.select(1, i - 1), z, pred_state);
    gs.push_back(g);
    result.latents.push_back(std::move(step));
  }

  // Decode every step in one batch.
  std::vector<int64_t> source;
  for (int64_t i = 1; i < T; ++i) source.push_back(std::min(i - 1, t_p - 1));
  const auto source_idx = torch::tensor(source, torch::kLong);
  std::vector<torch::Tensor> skips;
  for (const auto& s : enc.skips) {
    skips.push_back(s.view({B, T, s.size(1), s.size(2), s.size(3)})
                        .index_select(1, source_idx)
                        .reshape({B * (T - 1), s.size(1), s.size(2), s.size(3)}));
  }
  const auto g_all = torch::stack(gs, 1).reshape({B * (T - 1), -1});
  const auto frames = model->decode(g_all, skips).view({B, T - 1, x.size(2), x.size(3), x.size(4)});
  result.reconstructions = frames.narrow(1, 0, t_p - 1);
  result.predicted = frames.narrow(1, t_p - 1, T - t_p);
  return result;
}

// ---------------------------------------------------------------------------

RolloutSession::RolloutSession(TpgModel model, const torch::Tensor& observed,
                               const torch::Tensor& labels, std::shared_ptr<NoiseSource> noise)
    : model_(std::move(model)), noise_(std::move(noise)) {
  torch::NoGradGuard no_grad;
  check_clip_tensor(observed, "rollout");
  const auto& mask = model_->mask();
  const auto opts = model_->tensor_options();
  const auto x = observed.to(opts);
  const int64_t B = x.size(0);
  const int64_t t_p = x.size(1);
  if (t_p < 2) throw ArgumentError("rollout: need at least 2 observed frames, got " + std::to_string(t_p));
  if (mask.label) {
    if (!labels.defined() || labels.dim() != 2 || labels.size(0) != B) {
      throw ShapeError("rollout: labels must be [B, n_l]");
    }
    labels_ = labels.to(opts);
  }

  auto enc = model_->encode_content(x.reshape({B * t_p, x.size(2), x.size(3), x.size(4)}));
  const auto h = enc.h.view({B, t_p, -1});
  for (const auto& s : enc.skips) {
    skips_.push_back(
        s.view({B, t_p, s.size(1), s.size(2), s.size(3)}).select(1, t_p - 1).contiguous());
  }
  torch::Tensor hm;
  if (mask.motion) hm = motion_features(model_, x);

  if (mask.content) prior_content_state_ = model_->initial_state(GaussianCore::prior_content, B);
  if (mask.motion) prior_motion_state_ = model_->initial_state(GaussianCore::prior_motion, B);
  predictor_state_ = model_->initial_predictor_state(B);

  // Warm-up over t = 2..t_p on ground truth; its frames are never decoded.
  for (int64_t i = 1; i < t_p; ++i) {
    LatentGaussian gc, gm;
    if (mask.content) {
      std::tie(gc, prior_content_state_) =
          model_->prior_step(GaussianCore::prior_content, h.select(1, i - 1), prior_content_state_);
    }
    if (mask.motion) {
      std::tie(gm, prior_motion_state_) =
          model_->prior_step(GaussianCore::prior_motion, hm.select(1, i - 1), prior_motion_state_);
    }
    const auto z = draw_latent(&gc, &gm);
    predictor_state_ = model_->predictor_step(h.select(1, i - 1), z, predictor_state_).second;
  }
  h_prev_ = h.select(1, t_p - 1);
  if (mask.motion) motion_prev_ = hm.select(1, t_p - 1);
  frame_prev_ = x.select(1, t_p - 1);
  next_t_ = t_p + 1;
}

TernaryLatent RolloutSession::draw_latent(const LatentGaussian* content,
                                          const LatentGaussian* motion) {
  const auto& cfg = model_->config();
  const auto& mask = model_->mask();
  auto pick = [&](const LatentGaussian& g) {
    if (!noise_) return g.mean;
    return reparameterize(g, noise_->normal(g.mean.sizes(), g.mean.options()));
  };
  torch::Tensor c, m;
  if (mask.content) c = pick(*content);
  if (mask.motion) m = pick(*motion);
  return assemble_latent(c, m, labels_, mask, cfg.latent_dim, cfg.num_classes);
}

torch::Tensor RolloutSession::step() {
  torch::NoGradGuard no_grad;
  const auto& mask = model_->mask();
  LatentGaussian gc, gm;
  if (mask.content) {
    std::tie(gc, prior_content_state_) =
        model_->prior_step(GaussianCore::prior_content, h_prev_, prior_content_state_);
  }
  if (mask.motion) {
    std::tie(gm, prior_motion_state_) =
        model_->prior_step(GaussianCore::prior_motion, motion_prev_, prior_motion_state_);
  }
  const auto z = draw_latent(&gc, &gm);
  torch::Tensor g;
  std::tie(g, predictor_state_) = model_->predictor_step(h_prev_, z, predictor_state_);
  auto frame = model_->decode(g, skips_);
  h_prev_ = model_->encode_content(frame).h;
  if (mask.motion) motion_prev_ = model_->encode_motion(grayscale_difference(frame_prev_, frame));
  frame_prev_ = frame;
  ++next_t_;
  return frame;
}

torch::Tensor RolloutSession::advance(int64_t steps) {
  if (steps < 1) throw ArgumentError("rollout: horizon must be >= 1");
  std::vector<torch::Tensor> frames;
  for (int64_t i = 0; i < steps; ++i) frames.push_back(step());
  return torch::stack(frames, 1);
}

RolloutResult prior_mean_rollout(TpgModel& model, const torch::Tensor& observed,
                                 const torch::Tensor& labels, int64_t horizon) {
  if (horizon < 1) throw ArgumentError("prior_mean_rollout: horizon must be >= 1");
  RolloutSession session(model, observed, labels);
  RolloutResult result;
  result.mode = RolloutMode::prior_mean;
  result.predicted = session.advance(horizon);
  return result;
}

std::vector<RolloutResult> sampled_rollout(TpgModel& model, const torch::Tensor& observed,
                                           const torch::Tensor& labels, int64_t horizon, int64_t k,
                                           const NoiseFactory& noise_for_sample) {
  if (k < 1) throw ArgumentError("sampled_rollout: k must be >= 1");
  if (horizon < 1) throw ArgumentError("sampled_rollout: horizon must be >= 1");
  std::vector<RolloutResult> out;
  for (int64_t i = 0; i < k; ++i) {
    RolloutSession session(model, observed, labels, noise_for_sample(i));
    RolloutResult r;
    r.mode = RolloutMode::sampled;
    r.predicted = session.advance(horizon);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RolloutResult> sampled_rollout(TpgModel& model, const torch::Tensor& observed,
                                           const torch::Tensor& labels, int64_t horizon, int64_t k,
                                           uint64_t seed) {
  return sampled_rollout(model, observed, labels, horizon, k, [seed](int64_t i) {
    return std::make_shared<GaussianNoise>(derive_seed(seed, static_cast<uint64_t>(i)));
  });
}

}  // namespace tpg
