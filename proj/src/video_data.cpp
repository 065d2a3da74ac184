#include "tpg/video_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "tpg/errors.hpp"

namespace tpg {

namespace {

constexpr std::array<std::string_view, kDefaultNumClasses> kGestureTokens{"G2", "G3", "G4", "G6"};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double distance_to_segment(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double s = 0.0;
  if (len2 > 0.0) s = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  const double qx = a.x + s * dx - p.x;
  const double qy = a.y + s * dy - p.y;
  return std::sqrt(qx * qx + qy * qy);
}

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

double joint_angle(const JointTrajectory& j, const SynthGestureScript& s, double t) {
  const double progress = std::clamp(s.phase_offset + t / s.duration, 0.0, 1.0);
  const double swing = (j.end - j.start) * s.amplitude_scale * progress;
  const double wobble =
      j.wobble * std::sin(2.0 * std::numbers::pi * t / j.wobble_period + s.wobble_phase);
  return std::clamp(j.start + swing + wobble, j.lo, j.hi);
}

// Joint limits that keep a left arm anchored at (8, 56) with segments 18/16 and
// radius 2.5 inside a 64x64 frame for every reachable pose.
constexpr double kShoulderLo = 20.0;
constexpr double kShoulderHi = 80.0;
constexpr double kElbowLo = -60.0;
constexpr double kElbowHi = 40.0;

JointTrajectory shoulder(double start, double end, double wobble = 0.0, double period = 8.0) {
  return {start, end, wobble, period, kShoulderLo, kShoulderHi};
}

JointTrajectory elbow(double start, double end, double wobble = 0.0, double period = 8.0) {
  return {start, end, wobble, period, kElbowLo, kElbowHi};
}

ArmScript base_arm(double scale, bool mirrored) {
  ArmScript arm;
  arm.anchor = {8.0 * scale, 56.0 * scale};
  arm.upper_length = 18.0 * scale;
  arm.fore_length = 16.0 * scale;
  arm.radius = 2.5 * scale;
  arm.mirrored = mirrored;
  return arm;
}

}  // namespace

std::string GestureClass::display_name() const {
  if (index_ >= 0 && index_ < kDefaultNumClasses) return std::string(kGestureTokens[index_]);
  return "class" + std::to_string(index_);
}

GestureClass GestureClass::checked(int index, int num_classes) {
  if (index < 0 || index >= num_classes) {
    throw DomainError("gesture class index " + std::to_string(index) + " outside [0, " +
                      std::to_string(num_classes) + ")");
  }
  return GestureClass(index);
}

GestureClass GestureClass::from_token(std::string_view token) {
  for (int i = 0; i < kDefaultNumClasses; ++i) {
    if (kGestureTokens[i] == token) return GestureClass(i);
  }
  throw DomainError("unknown gesture token '" + std::string(token) + "'");
}

std::string to_string(ClipSource source) {
  return source == ClipSource::synthetic ? "synthetic" : "ingested";
}

ClipSource clip_source_from_string(std::string_view name) {
  if (name == "synthetic") return ClipSource::synthetic;
  if (name == "ingested") return ClipSource::ingested;
  throw ParseError("unknown clip source '" + std::string(name) + "'");
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ParseError("unknown split '" + std::string(name) + "'");
}

void VideoClip::validate() const {
  if (!frames.defined() || frames.dim() != 4) {
    throw ShapeError("clip '" + clip_id + "': frames must be a [T, C, H, W] tensor");
  }
  if (frames.size(0) < 2) throw ShapeError("clip '" + clip_id + "': needs at least 2 frames");
  const auto c = frames.size(1);
  if (c != 1 && c != 3) throw ShapeError("clip '" + clip_id + "': channel count must be 1 or 3");
  if (frames.min().item<double>() < 0.0 || frames.max().item<double>() > 1.0) {
    throw DomainError("clip '" + clip_id + "': pixel values outside [0,1]");
  }
}

torch::Tensor to_grayscale(const torch::Tensor& frame, const LumaWeights& weights) {
  if (frame.dim() < 3) throw ShapeError("to_grayscale: expected [..., C, H, W]");
  const auto c = frame.size(-3);
  if (c == 1) return frame;
  if (c != 3) {
    throw ArgumentError("to_grayscale: channel count must be 1 or 3, got " + std::to_string(c));
  }
  auto ch = frame.unbind(-3);
  return (ch[0] * weights.r + ch[1] * weights.g + ch[2] * weights.b).unsqueeze(-3);
}

torch::Tensor grayscale_difference(const torch::Tensor& prev, const torch::Tensor& curr,
                                   const LumaWeights& weights) {
  if (prev.sizes() != curr.sizes()) throw ShapeError("frame_difference: frame shapes differ");
  return to_grayscale(curr, weights) - to_grayscale(prev, weights);
}

FrameDifference frame_difference(const torch::Tensor& prev, const torch::Tensor& curr,
                                 const LumaWeights& weights) {
  return {grayscale_difference(prev, curr, weights)};
}

torch::Tensor one_hot_label(GestureClass gesture, int num_classes) {
  if (num_classes < 1 || gesture.index() < 0 || gesture.index() >= num_classes) {
    throw ArgumentError("one_hot_label: index " + std::to_string(gesture.index()) +
                        " out of range for " + std::to_string(num_classes) + " classes");
  }
  auto label = torch::zeros({num_classes});
  label[gesture.index()] = 1.0f;
  return label;
}

VideoClip subsample_every_other(const VideoClip& clip) {
  if (clip.length() < 3) {
    throw ArgumentError("subsample_every_other: clip '" + clip.clip_id + "' has " +
                        std::to_string(clip.length()) + " frames, need at least 3");
  }
  VideoClip out = clip;
  out.frames = clip.frames.index_select(0, torch::arange(0, clip.length(), 2)).contiguous();
  return out;
}

// ---------------------------------------------------------------------------

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b) {
  // splitmix64 over the combined words
  auto mix = [](uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ b);
}

SynthGestureScript make_gesture_script(GestureClass gesture, uint64_t seed, int64_t frame_size) {
  if (gesture.index() < 0 || gesture.index() >= kDefaultNumClasses) {
    throw DomainError("no synthetic script for gesture class " + std::to_string(gesture.index()));
  }
  if (frame_size < 8) throw ArgumentError("synthetic frame size must be at least 8");

  std::mt19937_64 rng(derive_seed(seed, static_cast<uint64_t>(gesture.index())));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double scale = static_cast<double>(frame_size) / 64.0;
  SynthGestureScript s;
  s.gesture = gesture;
  s.frame_size = frame_size;
  s.duration = 40.0;
  s.phase_offset = uniform(0.0, 0.25);
  s.amplitude_scale = uniform(0.8, 1.0);
  s.wobble_phase = uniform(0.0, 2.0 * std::numbers::pi);
  s.left = base_arm(scale, false);
  s.right = base_arm(scale, true);
  s.right.color = {0.70, 0.72, 0.78};

  const double jitter = uniform(-5.0, 5.0);
  switch (gesture.index()) {
    case 0:  // left arm approaches the center, right arm holds
      s.left.shoulder = shoulder(25.0 + jitter, 65.0);
      s.left.elbow = elbow(-50.0, 0.0);
      s.right.shoulder = shoulder(50.0, 50.0, 3.0, 10.0);
      s.right.elbow = elbow(-20.0 + jitter, -20.0);
      break;
    case 1:  // right arm pushes in with an oscillation, left arm holds
      s.right.shoulder = shoulder(40.0 + jitter, 60.0);
      s.right.elbow = elbow(-40.0, 20.0, 8.0, 6.0);
      s.left.shoulder = shoulder(55.0, 55.0, 2.0, 12.0);
      s.left.elbow = elbow(-10.0 + jitter, -10.0);
      break;
    case 2:  // hand-off: left arm unfolds from its corner, right arm comes to meet it
      s.left.shoulder = shoulder(20.0, 70.0);
      s.left.elbow = elbow(-60.0, 30.0);
      s.right.shoulder = shoulder(60.0 + jitter, 45.0);
      s.right.elbow = elbow(10.0, -20.0);
      break;
    case 3:  // left arm pulls away from the center
      s.left.shoulder = shoulder(70.0 + jitter, 25.0);
      s.left.elbow = elbow(20.0, -55.0);
      s.right.shoulder = shoulder(45.0, 45.0, 3.0, 9.0);
      s.right.elbow = elbow(-15.0, -15.0);
      break;
  }

  s.tissue = {uniform(0.50, 0.62), uniform(0.28, 0.36), uniform(0.26, 0.34)};
  const int n_blobs = 3;
  for (int i = 0; i < n_blobs; ++i) {
    BackgroundBlob blob;
    blob.center = {uniform(0.0, 64.0) * scale, uniform(0.0, 48.0) * scale};
    blob.sigma = uniform(6.0, 14.0) * scale;
    const double strength = uniform(-0.15, 0.15);
    blob.tint = {strength, 0.6 * strength, 0.5 * strength};
    s.blobs.push_back(blob);
  }
  return s;
}

ArmPose arm_pose(const SynthGestureScript& script, const ArmScript& arm, double t) {
  const double a1 = deg2rad(joint_angle(arm.shoulder, script, t));
  const double a2 = a1 + deg2rad(joint_angle(arm.elbow, script, t));
  ArmPose pose;
  pose.radius = arm.radius;
  pose.anchor = arm.anchor;
  pose.elbow = {arm.anchor.x + arm.upper_length * std::cos(a1),
                arm.anchor.y - arm.upper_length * std::sin(a1)};
  pose.tip = {pose.elbow.x + arm.fore_length * std::cos(a2),
              pose.elbow.y - arm.fore_length * std::sin(a2)};
  if (arm.mirrored) {
    const double size = static_cast<double>(script.frame_size);
    for (Point2* p : {&pose.anchor, &pose.elbow, &pose.tip}) p->x = size - p->x;
  }
  return pose;
}

torch::Tensor render_frame(const SynthGestureScript& script, int64_t t, int64_t channels) {
  if (channels != 1 && channels != 3) throw ArgumentError("render_frame: channels must be 1 or 3");
  const int64_t n = script.frame_size;
  const double td = static_cast<double>(t);
  const ArmPose left = arm_pose(script, script.left, td);
  const ArmPose right = arm_pose(script, script.right, td);

  auto rgb = torch::empty({3, n, n}, torch::kFloat32);
  auto acc = rgb.accessor<float, 3>();
  const std::array<double, 3> gripper{0.30, 0.30, 0.34};

  for (int64_t y = 0; y < n; ++y) {
    for (int64_t x = 0; x < n; ++x) {
      const Point2 p{static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5};
      std::array<double, 3> px = script.tissue;
      for (const auto& blob : script.blobs) {
        const double dx = p.x - blob.center.x;
        const double dy = p.y - blob.center.y;
        const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * blob.sigma * blob.sigma));
        for (int k = 0; k < 3; ++k) px[k] += blob.tint[k] * w;
      }
      for (const auto* arm : {&script.left, &script.right}) {
        const ArmPose& pose = arm == &script.left ? left : right;
        const double d = std::min(distance_to_segment(p, pose.anchor, pose.elbow),
                                  distance_to_segment(p, pose.elbow, pose.tip));
        const double cover = clamp01(pose.radius + 0.5 - d);
        if (cover > 0.0) {
          const double shade = 0.8 + 0.2 * clamp01(1.0 - d / pose.radius);
          for (int k = 0; k < 3; ++k) px[k] = px[k] * (1.0 - cover) + arm->color[k] * shade * cover;
        }
        const double dt = std::hypot(p.x - pose.tip.x, p.y - pose.tip.y);
        const double tip_cover = clamp01(0.8 * pose.radius + 0.5 - dt);
        if (tip_cover > 0.0) {
          for (int k = 0; k < 3; ++k) px[k] = px[k] * (1.0 - tip_cover) + gripper[k] * tip_cover;
        }
      }
      for (int k = 0; k < 3; ++k) acc[k][y][x] = static_cast<float>(clamp01(px[k]));
    }
  }
  if (channels == 1) return to_grayscale(rgb).clamp(0.0, 1.0);
  return rgb;
}

VideoClip generate_synthetic_clip(GestureClass gesture, uint64_t seed, int64_t length,
                                  const SynthOptions& options) {
  if (length < 2) {
    throw ArgumentError("generate_synthetic_clip: length must be >= 2, got " +
                        std::to_string(length));
  }
  GestureClass::checked(gesture.index(), options.num_classes);
  const auto script = make_gesture_script(gesture, seed, options.frame_size);
  std::vector<torch::Tensor> frames;
  frames.reserve(static_cast<size_t>(length));
  for (int64_t t = 0; t < length; ++t) frames.push_back(render_frame(script, t, options.channels));

  VideoClip clip;
  clip.frames = torch::stack(frames);
  clip.gesture = gesture;
  clip.clip_id = "synth_" + gesture.display_name() + "_" + std::to_string(seed);
  clip.source = ClipSource::synthetic;
  return clip;
}

VideoClip generate_synthetic_clip(int class_index, uint64_t seed, int64_t length,
                                  const SynthOptions& options) {
  return generate_synthetic_clip(GestureClass::checked(class_index, options.num_classes), seed,
                                 length, options);
}

std::vector<LabeledClip> build_synthetic_dataset(const SynthDatasetSpec& spec) {
  if (spec.clips_per_class < 1) throw ArgumentError("clips_per_class must be positive");
  if (spec.test_fraction < 0.0 || spec.test_fraction > 1.0) {
    throw ArgumentError("test_fraction must lie in [0, 1]");
  }
  SynthOptions render = spec.render;
  render.num_classes = spec.num_classes;
  const int n_test =
      static_cast<int>(std::lround(spec.test_fraction * static_cast<double>(spec.clips_per_class)));

  std::vector<LabeledClip> out;
  out.reserve(static_cast<size_t>(spec.num_classes * spec.clips_per_class));
  for (int c = 0; c < spec.num_classes; ++c) {
    const auto gesture = GestureClass::checked(c, spec.num_classes);
    for (int i = 0; i < spec.clips_per_class; ++i) {
      const uint64_t clip_seed =
          derive_seed(spec.seed, static_cast<uint64_t>(c), static_cast<uint64_t>(i));
      LabeledClip item;
      item.clip = generate_synthetic_clip(gesture, clip_seed, spec.clip_length, render);
      char id[64];
      std::snprintf(id, sizeof(id), "synth_%s_%04d", gesture.display_name().c_str(), i);
      item.clip.clip_id = id;
      item.split = i >= spec.clips_per_class - n_test ? Split::test : Split::train;
      out.push_back(std::move(item));
    }
  }
  return out;
}

}  // namespace tpg
