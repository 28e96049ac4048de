#include "au2av/media/face.hpp"

#include <cmath>
#include <limits>

#include "au2av/error.hpp"

namespace au2av::media {

Image pad_to_even_height(const Image& frame) {
  if (frame.height % 2 == 0) return frame;
  Image out(frame.height + 1, frame.width);
  std::copy(frame.pixels.begin(), frame.pixels.end(), out.pixels.begin());
  for (int x = 0; x < frame.width; ++x)
    for (int c = 0; c < 3; ++c) out.at(frame.height, x, c) = frame.at(frame.height - 1, x, c);
  return out;
}

FaceRegion crop_lower_half(const Image& frame) {
  if (frame.height < 1 || frame.width < 1) throw ValidationError("cannot crop an empty frame");
  const Image even = pad_to_even_height(frame);
  const int half = even.height / 2;
  FaceRegion region{Image(half, even.width), true};
  const std::size_t row = static_cast<std::size_t>(even.width) * 3;
  std::copy(even.pixels.begin() + half * row, even.pixels.end(), region.image.pixels.begin());
  return region;
}

Image crop_upper_half(const Image& frame) {
  const Image even = pad_to_even_height(frame);
  const int half = even.height / 2;
  Image out(half, even.width);
  std::copy_n(even.pixels.begin(), out.pixels.size(), out.pixels.begin());
  return out;
}

Image stack_vertical(const Image& top, const Image& bottom) {
  if (top.width != bottom.width) throw ValidationError("stack_vertical width mismatch");
  Image out(top.height + bottom.height, top.width);
  std::copy(top.pixels.begin(), top.pixels.end(), out.pixels.begin());
  std::copy(bottom.pixels.begin(), bottom.pixels.end(), out.pixels.begin() + top.pixels.size());
  return out;
}

int select_aligned_frame_index(const TalkingClip& clip, const PoseProvider& poses) {
  if (clip.frames.empty()) throw ValidationError("clip has no frames");
  int best = -1;
  double best_score = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(clip.frames.size()); ++i) {
    const auto p = poses.pose(clip.frames[i], i);
    if (!p) continue;
    const double score = std::abs(p->yaw) + std::abs(p->pitch) + std::abs(p->roll);
    if (score < best_score) {
      best_score = score;
      best = i;
    }
  }
  if (best < 0) throw ProviderError("pose provider '" + poses.name() + "' failed on every frame");
  return best;
}

Image select_aligned_identity_frame(const TalkingClip& clip, const PoseProvider& poses) {
  return clip.frames[select_aligned_frame_index(clip, poses)];
}

}  // namespace au2av::media
