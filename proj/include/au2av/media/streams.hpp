#pragma once

#include <filesystem>
#include <vector>

#include "au2av/media/video.hpp"

namespace au2av::media {

struct StreamClip {
  std::filesystem::path source;
  TalkingClip clip;
  bool temporal_ok = true;  // holds at least past + 1 frames
};

/// Two independently ordered clip streams (source and target domain); no
/// pairing between them is implied.
struct UnpairedStreams {
  std::vector<StreamClip> source;
  std::vector<StreamClip> target;
};

/// A clip can feed temporal losses with `past` context frames only when it
/// holds at least past + 1 frames.
bool usable_for_temporal(const TalkingClip& clip, int past);

/// Clip directories under `dir`, in name order.
std::vector<std::filesystem::path> list_clip_dirs(const std::filesystem::path& dir);

/// Short clips are kept but flagged (`temporal_ok == false`).
UnpairedStreams make_unpaired_streams(const std::filesystem::path& source_dir, const std::filesystem::path& target_dir,
                                      int past = 2);

}  // namespace au2av::media
