#pragma once

#include <filesystem>
#include <vector>

#include "au2av/media/video.hpp"
#include "au2av/providers.hpp"

namespace au2av::toy {

enum class FaceStyle { kHuman, kAnime };

/// Controls of the procedural face renderer.
struct FaceParams {
  double mouth_open = 0.0;  // 0 closed .. 1 wide
  double eye_open = 1.0;    // 0 shut .. 1 open
  PoseAngles pose;
  double skin_tone = 0.0;   // identity knob in [-1, 1]
};

struct RenderedFace {
  media::Image image;
  FaceLandmarks landmarks;
};

RenderedFace render_face(const FaceParams& params, int size, FaceStyle style);

/// Synthetic talking clip: mouth opening follows the audio envelope, eyes
/// blink on `blink_frames` (three-frame closures), head pose drifts slowly.
struct ToyClip {
  media::TalkingClip clip;
  std::vector<FaceLandmarks> landmarks;
  std::vector<PoseAngles> poses;
  std::vector<double> mouth_open;
};

struct ToyClipOptions {
  int frames = 25;
  int size = 64;
  double fps = 25.0;
  FaceStyle style = FaceStyle::kHuman;
  unsigned seed = 1;
  std::vector<int> blink_frames;
  bool with_audio = true;
};

ToyClip make_toy_clip(const ToyClipOptions& options);

/// Writes the clip directory plus `landmarks.txt` and `pose.txt` sidecars.
void write_toy_clip(const std::filesystem::path& dir, const ToyClip& toy, const std::string& transcript = "");

/// `count` clips named clip_000 ... under `dir`.
void write_toy_dataset(const std::filesystem::path& dir, int count, ToyClipOptions options);

}  // namespace au2av::toy
