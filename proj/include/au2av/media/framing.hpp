#pragma once

#include <vector>

#include "au2av/autograd/tensor.hpp"
#include "au2av/media/audio.hpp"
#include "au2av/media/mfcc.hpp"

namespace au2av::media {

inline constexpr double kCanonicalFps = 25.0;
inline constexpr double kCanonicalWindowMs = 200.0;

struct MfccWindow {
  ag::Tensor coefficients;  // [steps x 13]
  int center_frame_index = 0;
};

struct AudioWindowSequence {
  std::vector<MfccWindow> windows;
  int stride_samples = 0;
  int window_samples = 0;
};

/// Framing arithmetic shared by the raw and MFCC paths.
struct FramingPlan {
  int stride_samples = 0;   // round(rate / fps)
  int window_samples = 0;   // window_ms * rate / 1000
  int pad_samples = 0;      // window_samples / 2, applied at both ends
  int window_count = 0;     // round(duration * fps)
  int overlap_samples() const { return window_samples - stride_samples; }
};

FramingPlan plan_framing(std::size_t sample_count, int sample_rate, double fps, double window_ms = kCanonicalWindowMs);

/// Raw samples of window `index`: [index*stride - W/2, index*stride + W/2)
/// in the unpadded signal, zero outside it.
std::vector<double> window_samples(const AudioClip& clip, const FramingPlan& plan, int index);

/// One MFCC window centred on every video frame the clip covers.
AudioWindowSequence frame_audio_windows(const AudioClip& clip, double fps, double window_ms = kCanonicalWindowMs,
                                        const MfccConfig& mfcc = {});

}  // namespace au2av::media
