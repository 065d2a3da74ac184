#pragma once

#include <filesystem>

#include "tpg/clip_io.hpp"

namespace tpg {

// Ingestion of JIGSAWS-style recordings:
//   root/meta_file.txt                     one recording id per line (extra columns ignored)
//   root/video/<id>/frame_%06d.png         frames, numbered as in the transcription
//   root/transcriptions/<id>.txt           "<start> <end> <token>" lines, inclusive ranges
// Recording ids end in <user letter><trial digits> (e.g. Suturing_B001). The first
// `train_users` users in sorted order form the training split, the rest the test split.
struct JigsawsOptions {
  int train_users = 6;
  int64_t frame_size = kDefaultFrameSize;
  int64_t channels = 3;
  bool subsample = true;
};

inline constexpr const char* kJigsawsMetaFile = "meta_file.txt";

// One entry per transcribed segment whose gesture is one of the modelled classes.
ClipManifest load_manifest(const fs::path& root, const JigsawsOptions& options = {});

// Reads, resizes (bilinear) and optionally subsamples one segment.
VideoClip load_jigsaws_clip(const fs::path& root, const ManifestEntry& entry,
                            const JigsawsOptions& options = {});

// Converts every segment into a dataset directory readable by ClipDataset::open.
ClipDataset ingest_jigsaws(const fs::path& root, const fs::path& out_dir,
                           const JigsawsOptions& options = {});

}  // namespace tpg
