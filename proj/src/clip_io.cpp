#include "tpg/clip_io.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tpg/errors.hpp"

namespace tpg {

static_assert(std::endian::native == std::endian::little,
              "clip files are written with the host byte order, which must be little-endian");

namespace {

constexpr std::array<char, 8> kMagic{'T', 'P', 'G', 'C', 'L', 'I', 'P', '\0'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;
constexpr uint8_t kDtypeU8 = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("truncated clip header in " + path.string());
  return value;
}

struct Header {
  uint8_t dtype = kDtypeF32;
  std::vector<int64_t> dims;
};

Header read_header(std::istream& in, const fs::path& path) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("not a clip tensor file: " + path.string());
  const auto version = get<uint32_t>(in, path);
  if (version != kVersion) {
    throw IoError("unsupported clip file version " + std::to_string(version) + " in " +
                  path.string());
  }
  const auto endian = get<uint8_t>(in, path);
  if (endian != 'L') throw IoError("clip file is not little-endian: " + path.string());
  Header h;
  h.dtype = get<uint8_t>(in, path);
  if (h.dtype != kDtypeF32 && h.dtype != kDtypeU8) {
    throw IoError("unknown clip dtype in " + path.string());
  }
  const auto rank = get<uint16_t>(in, path);
  for (uint16_t i = 0; i < rank; ++i) {
    const auto d = get<int64_t>(in, path);
    if (d < 0) throw IoError("negative dimension in " + path.string());
    h.dims.push_back(d);
  }
  return h;
}

std::ofstream open_for_write(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<const ManifestEntry*> ClipManifest::split(Split which) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == which) out.push_back(&e);
  }
  return out;
}

const ManifestEntry& ClipManifest::find(const std::string& clip_id) const {
  for (const auto& e : entries) {
    if (e.clip_id == clip_id) return e;
  }
  throw LookupError("unknown clip_id '" + clip_id + "'");
}

void write_clip_tensor(const fs::path& path, const torch::Tensor& frames) {
  const auto data = frames.to(torch::kCPU).contiguous();
  const bool u8 = data.scalar_type() == torch::kUInt8;
  if (!u8 && data.scalar_type() != torch::kFloat32) {
    throw ArgumentError("write_clip_tensor: dtype must be float32 or uint8");
  }
  auto out = open_for_write(path, std::ios::binary);
  out.write(kMagic.data(), kMagic.size());
  put<uint32_t>(out, kVersion);
  put<uint8_t>(out, 'L');
  put<uint8_t>(out, u8 ? kDtypeU8 : kDtypeF32);
  put<uint16_t>(out, static_cast<uint16_t>(data.dim()));
  for (auto d : data.sizes()) put<int64_t>(out, d);
  out.write(static_cast<const char*>(data.data_ptr()),
            static_cast<std::streamsize>(data.numel() * data.element_size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<int64_t> read_clip_shape(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_header(in, path).dims;
}

torch::Tensor read_clip_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const Header h = read_header(in, path);
  auto tensor = torch::empty(h.dims, h.dtype == kDtypeU8 ? torch::kUInt8 : torch::kFloat32);
  in.read(static_cast<char*>(tensor.data_ptr()),
          static_cast<std::streamsize>(tensor.numel() * tensor.element_size()));
  if (!in) throw IoError("truncated clip data in " + path.string());
  if (h.dtype == kDtypeU8) return tensor.to(torch::kFloat32) / 255.0;
  return tensor;
}

void write_manifest(const fs::path& path, const ClipManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["format"] = "tpg-dataset";
  doc["version"] = 1;
  doc["num_classes"] = manifest.num_classes;
  doc["frame_size"] = manifest.frame_size;
  doc["channels"] = manifest.channels;
  auto& clips = doc["clips"] = nlohmann::ordered_json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["clip_id"] = e.clip_id;
    j["path"] = e.path;
    j["gesture"] = e.gesture.index();
    j["gesture_name"] = e.gesture.display_name();
    j["frame_count"] = e.frame_count;
    j["split"] = to_string(e.split);
    j["source"] = to_string(e.source);
    j["user"] = e.user;
    j["start_frame"] = e.start_frame;
    clips.push_back(std::move(j));
  }
  auto out = open_for_write(path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

ClipManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest " + path.string() + ": " + e.what());
  }
  ClipManifest m;
  try {
    m.num_classes = doc.value("num_classes", kDefaultNumClasses);
    m.frame_size = doc.value("frame_size", kDefaultFrameSize);
    m.channels = doc.value("channels", int64_t{3});
    for (const auto& j : doc.at("clips")) {
      ManifestEntry e;
      e.clip_id = j.at("clip_id").get<std::string>();
      e.path = j.at("path").get<std::string>();
      e.gesture = GestureClass::checked(j.at("gesture").get<int>(), m.num_classes);
      e.frame_count = j.at("frame_count").get<int64_t>();
      e.split = split_from_string(j.at("split").get<std::string>());
      e.source = clip_source_from_string(j.value("source", std::string("synthetic")));
      e.user = j.value("user", std::string());
      e.start_frame = j.value("start_frame", int64_t{0});
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest " + path.string() + ": " + e.what());
  }
  for (size_t i = 0; i < m.entries.size(); ++i) {
    for (size_t j = i + 1; j < m.entries.size(); ++j) {
      if (m.entries[i].clip_id == m.entries[j].clip_id) {
        throw ParseError("duplicate clip_id '" + m.entries[i].clip_id + "' in " + path.string());
      }
    }
  }
  return m;
}

std::string file_fingerprint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  uint64_t hash = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<uint8_t>(buf[static_cast<size_t>(i)]);
      hash *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << hash;
  return os.str();
}

ClipDataset ClipDataset::open(const fs::path& root) {
  const auto manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("no dataset manifest at " + manifest_path.string());
  ClipDataset ds;
  ds.root_ = root;
  ds.manifest_ = read_manifest(manifest_path);
  return ds;
}

ClipDataset ClipDataset::write(const fs::path& root, const std::vector<LabeledClip>& clips,
                               int num_classes) {
  std::error_code ec;
  fs::create_directories(root / "clips", ec);
  if (ec) throw IoError("cannot create dataset directory " + root.string() + ": " + ec.message());

  ClipDataset ds;
  ds.root_ = root;
  ds.manifest_.num_classes = num_classes;
  if (!clips.empty()) {
    ds.manifest_.frame_size = clips.front().clip.height();
    ds.manifest_.channels = clips.front().clip.channels();
  }
  for (const auto& item : clips) {
    const auto& clip = item.clip;
    clip.validate();
    const std::string rel = "clips/" + clip.clip_id + ".bin";
    write_clip_tensor(root / rel,
                      (clip.frames * 255.0).round().clamp(0, 255).to(torch::kUInt8));
    ManifestEntry e;
    e.clip_id = clip.clip_id;
    e.path = rel;
    e.gesture = clip.gesture;
    e.frame_count = clip.length();
    e.split = item.split;
    e.source = clip.source;
    e.user = item.user;
    ds.manifest_.entries.push_back(std::move(e));
  }
  write_manifest(root / "manifest.json", ds.manifest_);
  return ds;
}

std::string ClipDataset::fingerprint() const {
  std::string digests = file_fingerprint(root_ / "manifest.json");
  for (const auto& e : manifest_.entries) digests += file_fingerprint(root_ / e.path);
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (const char c : digests) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

VideoClip ClipDataset::load(const ManifestEntry& entry) const {
  VideoClip clip;
  clip.frames = read_clip_tensor(root_ / entry.path);
  if (clip.frames.dim() != 4 || clip.frames.size(0) != entry.frame_count) {
    throw IoError("clip file " + (root_ / entry.path).string() + " does not hold " +
                  std::to_string(entry.frame_count) + " frames");
  }
  clip.gesture = entry.gesture;
  clip.clip_id = entry.clip_id;
  clip.source = entry.source;
  return clip;
}

VideoClip ClipDataset::load(const std::string& clip_id) const {
  return load(manifest_.find(clip_id));
}

std::vector<VideoClip> ClipDataset::load_split(Split which) const {
  std::vector<VideoClip> out;
  for (const auto* e : manifest_.split(which)) out.push_back(load(*e));
  return out;
}

void ClipDataset::verify() const {
  for (const auto& e : manifest_.entries) {
    const auto shape = read_clip_shape(root_ / e.path);
    if (shape.empty() || shape[0] != e.frame_count) {
      throw IoError("clip '" + e.clip_id + "' declares " + std::to_string(e.frame_count) +
                    " frames but " + (root_ / e.path).string() + " disagrees");
    }
  }
}

}  // namespace tpg
