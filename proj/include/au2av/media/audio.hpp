#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace au2av::media {

inline constexpr int kCanonicalSampleRate = 16000;

/// Mono waveform.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;

  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
  /// Throws ValidationError on a non-positive rate or non-finite samples.
  void validate() const;
};

/// Reads a RIFF/WAVE file (PCM 8/16/24/32-bit or IEEE float 32/64),
/// downmixing to mono. Samples are scaled to [-1, 1].
AudioClip read_wav(const std::filesystem::path& path);
/// Writes 16-bit PCM mono.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Linear-interpolation resampler; output length is round(n * to / from).
std::vector<double> resample(std::span<const double> samples, int from_rate, int to_rate);

/// Reads, downmixes and resamples to `target_rate`. Empty audio is rejected.
AudioClip load_audio(const std::filesystem::path& path, int target_rate = kCanonicalSampleRate);

}  // namespace au2av::media
