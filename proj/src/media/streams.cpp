#include "au2av/media/streams.hpp"

#include <algorithm>

#include "au2av/error.hpp"

namespace au2av::media {

bool usable_for_temporal(const TalkingClip& clip, int past) {
  return static_cast<int>(clip.frames.size()) >= past + 1;
}

std::vector<std::filesystem::path> list_clip_dirs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_directory()) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::vector<StreamClip> load_stream(const std::filesystem::path& dir, const char* label, int past) {
  std::vector<StreamClip> stream;
  for (const auto& clip_dir : list_clip_dirs(dir)) {
    StreamClip sc{clip_dir, load_video(clip_dir), true};
    sc.temporal_ok = usable_for_temporal(sc.clip, past);
    stream.push_back(std::move(sc));
  }
  if (stream.empty()) throw ValidationError(std::string(label) + " domain has no clips: " + dir.string());
  return stream;
}

}  // namespace

UnpairedStreams make_unpaired_streams(const std::filesystem::path& source_dir, const std::filesystem::path& target_dir,
                                      int past) {
  return {load_stream(source_dir, "source", past), load_stream(target_dir, "target", past)};
}

}  // namespace au2av::media
