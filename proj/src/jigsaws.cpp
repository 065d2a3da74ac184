#include "tpg/jigsaws.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tpg/errors.hpp"

namespace tpg {

namespace {

std::string frame_name(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06lld.png", static_cast<long long>(index));
  return buf;
}

std::string user_of(const std::string& recording) {
  static const std::regex pattern(R"(([A-Za-z])(\d+)$)");
  std::smatch m;
  if (!std::regex_search(recording, m, pattern)) {
    throw ParseError("cannot derive a user id from recording '" + recording + "'");
  }
  return m[1].str();
}

// Gesture vocabulary G1..G15. Only G2, G3, G4, G6 become clips.
bool known_token(const std::string& token) {
  static const std::regex pattern(R"(G([1-9]|1[0-5]))");
  return std::regex_match(token, pattern);
}

struct Segment {
  int64_t start = 0;
  int64_t end = 0;
  std::string token;
};

std::vector<Segment> read_transcription(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing transcription " + path.string());
  std::vector<Segment> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Segment s;
    if (!(ls >> s.start >> s.end >> s.token)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected '<start> <end> <gesture>'");
    }
    if (!known_token(s.token)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": unknown gesture token '" +
                       s.token + "'");
    }
    if (s.end < s.start) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": end before start");
    }
    out.push_back(s);
  }
  return out;
}

torch::Tensor read_frame(const fs::path& path, const JigsawsOptions& options) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read frame " + path.string());
  cv::Mat resized;
  cv::resize(bgr, resized, cv::Size(static_cast<int>(options.frame_size), static_cast<int>(options.frame_size)),
             0, 0, cv::INTER_LINEAR);
  cv::Mat rgb;
  cv::cvtColor(resized, rgb, cv::COLOR_BGR2RGB);
  auto hwc = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  auto chw = hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
  if (options.channels == 1) return to_grayscale(chw).clamp(0.0, 1.0);
  return chw;
}

}  // namespace

ClipManifest load_manifest(const fs::path& root, const JigsawsOptions& options) {
  const auto meta_path = root / kJigsawsMetaFile;
  std::ifstream meta(meta_path);
  if (!meta) throw IoError("missing recording manifest " + meta_path.string());

  std::vector<std::string> recordings;
  std::string line;
  while (std::getline(meta, line)) {
    std::istringstream ls(line);
    std::string id;
    if (ls >> id) recordings.push_back(id);
  }
  if (recordings.empty()) throw IoError("recording manifest " + meta_path.string() + " is empty");

  std::set<std::string> users;
  for (const auto& r : recordings) users.insert(user_of(r));
  std::set<std::string> train_users;
  for (const auto& u : users) {
    if (static_cast<int>(train_users.size()) >= options.train_users) break;
    train_users.insert(u);
  }

  ClipManifest manifest;
  manifest.frame_size = options.frame_size;
  manifest.channels = options.channels;
  for (const auto& rec : recordings) {
    const auto user = user_of(rec);
    const fs::path video_rel = fs::path("video") / rec;
    for (const auto& seg : read_transcription(root / "transcriptions" / (rec + ".txt"))) {
      GestureClass gesture;
      try {
        gesture = GestureClass::from_token(seg.token);
      } catch (const DomainError&) {
        continue;  // a valid gesture that is not modelled
      }
      for (int64_t f = seg.start; f <= seg.end; ++f) {
        if (!fs::exists(root / video_rel / frame_name(f))) {
          throw IoError("recording '" + rec + "' is missing " + (video_rel / frame_name(f)).string());
        }
      }
      ManifestEntry e;
      char id[160];
      std::snprintf(id, sizeof(id), "%s_%s_%06lld", rec.c_str(), seg.token.c_str(),
                    static_cast<long long>(seg.start));
      e.clip_id = id;
      e.path = video_rel.string();
      e.gesture = gesture;
      e.frame_count = seg.end - seg.start + 1;
      e.split = train_users.contains(user) ? Split::train : Split::test;
      e.source = ClipSource::ingested;
      e.user = user;
      e.start_frame = seg.start;
      manifest.entries.push_back(std::move(e));
    }
  }
  return manifest;
}

VideoClip load_jigsaws_clip(const fs::path& root, const ManifestEntry& entry,
                            const JigsawsOptions& options) {
  std::vector<torch::Tensor> frames;
  frames.reserve(static_cast<size_t>(entry.frame_count));
  for (int64_t i = 0; i < entry.frame_count; ++i) {
    frames.push_back(read_frame(root / entry.path / frame_name(entry.start_frame + i), options));
  }
  VideoClip clip;
  clip.frames = torch::stack(frames);
  clip.gesture = entry.gesture;
  clip.clip_id = entry.clip_id;
  clip.source = ClipSource::ingested;
  if (options.subsample && clip.length() >= 3) clip = subsample_every_other(clip);
  return clip;
}

ClipDataset ingest_jigsaws(const fs::path& root, const fs::path& out_dir,
                           const JigsawsOptions& options) {
  const auto manifest = load_manifest(root, options);
  std::vector<LabeledClip> clips;
  for (const auto& e : manifest.entries) {
    LabeledClip item;
    item.clip = load_jigsaws_clip(root, e, options);
    if (item.clip.length() < 2) continue;
    item.split = e.split;
    item.user = e.user;
    clips.push_back(std::move(item));
  }
  return ClipDataset::write(out_dir, clips, manifest.num_classes);
}

}  // namespace tpg
