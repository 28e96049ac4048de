#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "au2av/autograd/tensor.hpp"
#include "au2av/media/video.hpp"
#include "au2av/providers.hpp"

namespace au2av::stage1 {

/// One training window: L+1 consecutive frames with their audio.
struct Stage1Sample {
  ag::Tensor identity;                  // [B,3,R,R], the identity frame repeated
  ag::Tensor frames;                    // [B,3,R,R] in [-1,1]
  ag::Tensor mfcc;                      // [B,steps,13], one window per frame
  ag::Tensor sync_mfcc;                 // [1,steps,13], window centred on the middle frame
  std::optional<ag::Tensor> landmarks;  // [B,24] pixels at resolution R
  int batch() const { return frames.dim(0); }
};

/// A clip prepared for stage-1 training at a fixed resolution.
struct Stage1Clip {
  std::string name;
  ag::Tensor identity;                  // [1,3,R,R]
  ag::Tensor frames;                    // [T,3,R,R]
  ag::Tensor mfcc;                      // [T,steps,13]
  std::optional<ag::Tensor> landmarks;  // [T,24]

  int frame_count() const { return frames.dim(0); }
  /// Frames [start, start + count).
  Stage1Sample sample(int start, int count) const;
};

/// Resamples frames to `resolution`, frames the audio and aligns both to
/// min(frame count, window count). `identity` defaults to frame 0.
Stage1Clip make_stage1_clip(const std::string& name, const media::TalkingClip& clip, int resolution,
                            const std::optional<std::vector<FaceLandmarks>>& landmarks = std::nullopt,
                            const std::optional<media::Image>& identity = std::nullopt);

/// Loads a clip directory; the identity frame is picked from `pose.txt`
/// when the manifest names one, and `landmarks.txt` is attached likewise.
Stage1Clip load_stage1_clip(const std::filesystem::path& dir, int resolution);

/// Every clip directory under `root`, in name order.
std::vector<Stage1Clip> load_stage1_dataset(const std::filesystem::path& root, int resolution);

/// MFCC of a 200 ms silent window, shape [steps, 13].
ag::Tensor silence_mfcc();

/// [0,1] image -> [1,3,R,R] in [-1,1], resampled when needed.
ag::Tensor identity_tensor(const media::Image& image, int resolution);

}  // namespace au2av::stage1
