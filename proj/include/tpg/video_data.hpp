#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tpg {

inline constexpr int kDefaultNumClasses = 4;
inline constexpr int64_t kDefaultFrameSize = 64;

// Gesture class with a canonical total order. With the default four classes
// index 0..3 maps onto the suturing gestures G2, G3, G4, G6.
class GestureClass {
 public:
  constexpr GestureClass() = default;
  constexpr explicit GestureClass(int index) : index_(index) {}

  constexpr int index() const { return index_; }
  std::string display_name() const;

  // Throws DomainError when index is outside [0, num_classes).
  static GestureClass checked(int index, int num_classes = kDefaultNumClasses);
  // "G2" -> 0 ... "G6" -> 3. Throws DomainError on anything else.
  static GestureClass from_token(std::string_view token);

  friend constexpr bool operator==(GestureClass, GestureClass) = default;
  friend constexpr auto operator<=>(GestureClass, GestureClass) = default;

 private:
  int index_ = 0;
};

enum class ClipSource { synthetic, ingested };

std::string to_string(ClipSource source);
ClipSource clip_source_from_string(std::string_view name);

// Frames are stored [T, C, H, W] (float32, values in [0,1]).
struct VideoClip {
  torch::Tensor frames;
  GestureClass gesture;
  std::string clip_id;
  ClipSource source = ClipSource::synthetic;

  int64_t length() const { return frames.size(0); }
  int64_t channels() const { return frames.size(1); }
  int64_t height() const { return frames.size(2); }
  int64_t width() const { return frames.size(3); }
  torch::Tensor frame(int64_t t) const { return frames[t]; }

  // Checks rank, T >= 2 and the [0,1] pixel range. Throws ShapeError/DomainError.
  void validate() const;
};

// Single-channel grayscale difference, values in [-1,1], shape [1, H, W].
struct FrameDifference {
  torch::Tensor delta;
};

struct LumaWeights {
  double r = 0.299;
  double g = 0.587;
  double b = 0.114;
};

// Works on [C, H, W] or any [..., C, H, W] tensor; C must be 1 or 3.
torch::Tensor to_grayscale(const torch::Tensor& frame, const LumaWeights& weights = {});

FrameDifference frame_difference(const torch::Tensor& prev, const torch::Tensor& curr,
                                 const LumaWeights& weights = {});
// Batched form used by the model: grayscale(curr) - grayscale(prev) over [..., C, H, W].
torch::Tensor grayscale_difference(const torch::Tensor& prev, const torch::Tensor& curr,
                                   const LumaWeights& weights = {});

torch::Tensor one_hot_label(GestureClass gesture, int num_classes);

// Keeps frames 0, 2, 4, ...; requires at least 3 frames.
VideoClip subsample_every_other(const VideoClip& clip);

// ---------------------------------------------------------------------------
// Synthetic dual-arm gestures.

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Angle(t) = clamp(start + (end - start) * amplitude * progress(t)
//                  + wobble * sin(2*pi*t / wobble_period + phase), lo, hi)
// where progress(t) = clamp(phase_offset + t / duration, 0, 1). Degrees.
struct JointTrajectory {
  double start = 0.0;
  double end = 0.0;
  double wobble = 0.0;
  double wobble_period = 8.0;
  double lo = -180.0;
  double hi = 180.0;
};

struct ArmScript {
  Point2 anchor;                 // pixels
  double upper_length = 0.0;     // pixels
  double fore_length = 0.0;      // pixels
  double radius = 0.0;           // half thickness, pixels
  JointTrajectory shoulder;      // absolute angle, 0 = pointing right, 90 = up
  JointTrajectory elbow;         // relative to the upper segment
  bool mirrored = false;         // right arm: x -> size - x
  std::array<double, 3> color{0.82, 0.82, 0.86};
};

struct ArmPose {
  Point2 anchor;
  Point2 elbow;
  Point2 tip;
  double radius = 0.0;
};

struct BackgroundBlob {
  Point2 center;
  double sigma = 0.0;
  std::array<double, 3> tint{};
};

struct SynthGestureScript {
  GestureClass gesture;
  int64_t frame_size = kDefaultFrameSize;
  ArmScript left;
  ArmScript right;
  double duration = 30.0;        // frames over which the scripted progress runs 0 -> 1
  double phase_offset = 0.0;     // sampled per clip
  double amplitude_scale = 1.0;  // sampled per clip
  double wobble_phase = 0.0;     // sampled per clip
  std::array<double, 3> tissue{0.55, 0.32, 0.30};
  std::vector<BackgroundBlob> blobs;
};

SynthGestureScript make_gesture_script(GestureClass gesture, uint64_t seed,
                                       int64_t frame_size = kDefaultFrameSize);

ArmPose arm_pose(const SynthGestureScript& script, const ArmScript& arm, double t);

// [C, H, W] rendering of the script at frame t; C in {1, 3}.
torch::Tensor render_frame(const SynthGestureScript& script, int64_t t, int64_t channels = 3);

struct SynthOptions {
  int64_t frame_size = kDefaultFrameSize;
  int64_t channels = 3;
  int num_classes = kDefaultNumClasses;
};

VideoClip generate_synthetic_clip(GestureClass gesture, uint64_t seed, int64_t length,
                                  const SynthOptions& options = {});
// Same, but validates a raw class index first (DomainError when out of range).
VideoClip generate_synthetic_clip(int class_index, uint64_t seed, int64_t length,
                                  const SynthOptions& options = {});

enum class Split { train, test };
std::string to_string(Split split);
Split split_from_string(std::string_view name);

struct SynthDatasetSpec {
  int num_classes = kDefaultNumClasses;
  int clips_per_class = 25;
  int64_t clip_length = 30;
  uint64_t seed = 0;
  double test_fraction = 0.2;
  SynthOptions render;
};

struct LabeledClip {
  VideoClip clip;
  Split split = Split::train;
  std::string user;  // operator id for ingested clips
};

// Exactly clips_per_class clips for every class; the last
// round(test_fraction * clips_per_class) clips of each class are test clips.
std::vector<LabeledClip> build_synthetic_dataset(const SynthDatasetSpec& spec);

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0);

}  // namespace tpg
