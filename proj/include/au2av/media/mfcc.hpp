#pragma once

#include <span>

#include "au2av/autograd/tensor.hpp"

namespace au2av::media {

inline constexpr int kMfccCoefficients = 13;

/// Short-time framing inside one conditioning window: 25 ms frames with a
/// 10 ms hop at 16 kHz, 26 mel bands, 13 cepstra.
struct MfccConfig {
  int frame_length = 400;
  int hop_length = 160;
  int fft_size = 512;
  int mel_bands = 26;
  double pre_emphasis = 0.97;
  double low_hz = 0.0;
  double high_hz = 0.0;  // 0 means Nyquist
  double log_floor = 1e-10;
};

/// Number of short-time steps produced for a window of `samples` samples.
int mfcc_steps(std::size_t samples, const MfccConfig& cfg = {});

/// Returns a [steps x 13] matrix. Silence gives finite values (log floor).
ag::Tensor compute_mfcc(std::span<const double> window, int sample_rate, const MfccConfig& cfg = {});

}  // namespace au2av::media
