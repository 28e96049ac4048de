#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "au2av/media/audio.hpp"
#include "au2av/media/image.hpp"

namespace au2av::media {

/// Ordered frames at a fixed rate plus optional aligned audio.
struct TalkingClip {
  std::vector<Image> frames;
  double fps = 25.0;
  std::optional<AudioClip> audio;

  int height() const { return frames.empty() ? 0 : frames[0].height; }
  int width() const { return frames.empty() ? 0 : frames[0].width; }
  /// Uniform frame size, fps > 0, pixels finite and within [0, 1].
  void validate() const;
};

/// Per-clip `manifest.txt`: key=value lines. `fps`, `frame_count` and
/// `audio_path` are the core keys; other keys (identity_path,
/// landmarks_path, pose_path, transcript) are carried through verbatim.
struct ClipManifest {
  double fps = 25.0;
  int frame_count = 0;
  std::string audio_path;
  std::map<std::string, std::string> extra;

  static ClipManifest read(const std::filesystem::path& file);
  void write(const std::filesystem::path& file) const;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// `frame_000001.png` style name for 0-based index `i`.
std::string frame_file_name(int i);

/// Loads a frame directory. With a manifest, fps/frame_count/audio come from
/// it; otherwise every PNG in name order is taken at `fps`.
TalkingClip load_video(const std::filesystem::path& dir, double fps = 25.0);

/// Writes frames, `audio.wav` (when present) and the manifest.
void write_clip(const std::filesystem::path& dir, const TalkingClip& clip,
                const std::map<std::string, std::string>& extra = {});

}  // namespace au2av::media
