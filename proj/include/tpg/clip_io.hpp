#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tpg/video_data.hpp"

namespace tpg {

namespace fs = std::filesystem;

struct ManifestEntry {
  std::string clip_id;
  std::string path;  // relative to the dataset (or ingestion) root
  GestureClass gesture;
  int64_t frame_count = 0;
  Split split = Split::train;
  ClipSource source = ClipSource::synthetic;
  std::string user;         // operator id for ingested data, empty for synthetic clips
  int64_t start_frame = 0;  // first source frame of the segment (ingested data)
};

struct ClipManifest {
  int num_classes = kDefaultNumClasses;
  int64_t frame_size = kDefaultFrameSize;
  int64_t channels = 3;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(Split which) const;
  const ManifestEntry& find(const std::string& clip_id) const;  // LookupError when absent
};

// Flat little-endian tensor file:
//   "TPGCLIP\0" | u32 version | u8 'L' | u8 dtype (0 = f32, 1 = u8) | u16 rank | i64 dims[rank] | data
// Frames are laid out [T, C, H, W].
void write_clip_tensor(const fs::path& path, const torch::Tensor& frames);
torch::Tensor read_clip_tensor(const fs::path& path);
std::vector<int64_t> read_clip_shape(const fs::path& path);

void write_manifest(const fs::path& path, const ClipManifest& manifest);
ClipManifest read_manifest(const fs::path& path);

// Stable 64-bit FNV-1a digest of a file's bytes, as 16 hex characters.
std::string file_fingerprint(const fs::path& path);

// A dataset directory: root/manifest.json plus root/clips/<clip_id>.bin (8-bit frames).
class ClipDataset {
 public:
  static ClipDataset open(const fs::path& root);
  static ClipDataset write(const fs::path& root, const std::vector<LabeledClip>& clips,
                           int num_classes);

  const fs::path& root() const { return root_; }
  const ClipManifest& manifest() const { return manifest_; }
  std::string fingerprint() const;  // covers the manifest and every clip file

  VideoClip load(const ManifestEntry& entry) const;
  VideoClip load(const std::string& clip_id) const;
  std::vector<VideoClip> load_split(Split which) const;

  // Every entry resolves to a tensor file with the declared frame count.
  void verify() const;

 private:
  fs::path root_;
  ClipManifest manifest_;
};

}  // namespace tpg
