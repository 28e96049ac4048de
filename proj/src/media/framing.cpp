#include "au2av/media/framing.hpp"

#include <cmath>

#include "au2av/error.hpp"

namespace au2av::media {

FramingPlan plan_framing(std::size_t sample_count, int sample_rate, double fps, double window_ms) {
  if (!(fps > 0.0)) throw ValidationError("fps must be positive");
  if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
  if (!(window_ms > 0.0)) throw ValidationError("window length must be positive");
  FramingPlan plan;
  plan.stride_samples = static_cast<int>(std::lround(sample_rate / fps));
  plan.window_samples = static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
  plan.pad_samples = plan.window_samples / 2;
  if (sample_count < static_cast<std::size_t>(plan.window_samples))
    throw ValidationError("clip of " + std::to_string(sample_count) + " samples is shorter than one " +
                          std::to_string(plan.window_samples) + "-sample window");
  plan.window_count = static_cast<int>(std::lround(static_cast<double>(sample_count) / sample_rate * fps));
  return plan;
}

std::vector<double> window_samples(const AudioClip& clip, const FramingPlan& plan, int index) {
  std::vector<double> out(plan.window_samples, 0.0);
  const long start = static_cast<long>(index) * plan.stride_samples - plan.pad_samples;
  const long n = static_cast<long>(clip.samples.size());
  for (int i = 0; i < plan.window_samples; ++i) {
    const long src = start + i;
    if (src >= 0 && src < n) out[i] = clip.samples[src];
  }
  return out;
}

AudioWindowSequence frame_audio_windows(const AudioClip& clip, double fps, double window_ms, const MfccConfig& mfcc) {
  clip.validate();
  if (clip.samples.empty()) throw ValidationError("cannot frame an empty clip");
  const FramingPlan plan = plan_framing(clip.samples.size(), clip.sample_rate, fps, window_ms);
  AudioWindowSequence seq;
  seq.stride_samples = plan.stride_samples;
  seq.window_samples = plan.window_samples;
  seq.windows.reserve(plan.window_count);
  for (int i = 0; i < plan.window_count; ++i) {
    const auto raw = window_samples(clip, plan, i);
    seq.windows.push_back({compute_mfcc(raw, clip.sample_rate, mfcc), i});
  }
  return seq;
}

}  // namespace au2av::media
