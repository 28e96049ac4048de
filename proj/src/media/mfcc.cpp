#include "au2av/media/mfcc.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "au2av/error.hpp"

namespace au2av::media {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters, [bands x (fft/2+1)].
std::vector<std::vector<double>> mel_filterbank(const MfccConfig& cfg, int sample_rate) {
  const int bins = cfg.fft_size / 2 + 1;
  const double high = cfg.high_hz > 0.0 ? cfg.high_hz : sample_rate / 2.0;
  const double mlo = hz_to_mel(cfg.low_hz), mhi = hz_to_mel(high);
  std::vector<double> edges(cfg.mel_bands + 2);
  for (int i = 0; i < cfg.mel_bands + 2; ++i) {
    const double hz = mel_to_hz(mlo + (mhi - mlo) * i / (cfg.mel_bands + 1));
    edges[i] = hz * cfg.fft_size / sample_rate;  // fractional bin
  }
  std::vector<std::vector<double>> bank(cfg.mel_bands, std::vector<double>(bins, 0.0));
  for (int m = 0; m < cfg.mel_bands; ++m) {
    const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      if (k > l && k <= c && c > l) bank[m][k] = (k - l) / (c - l);
      else if (k > c && k < r && r > c) bank[m][k] = (r - k) / (r - c);
    }
  }
  return bank;
}

}  // namespace

int mfcc_steps(std::size_t samples, const MfccConfig& cfg) {
  if (samples <= static_cast<std::size_t>(cfg.frame_length)) return 1;
  return 1 + static_cast<int>((samples - cfg.frame_length) / cfg.hop_length);
}

ag::Tensor compute_mfcc(std::span<const double> window, int sample_rate, const MfccConfig& cfg) {
  if (window.empty()) throw ValidationError("MFCC of an empty window");
  if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
  if (cfg.fft_size < cfg.frame_length) throw ValidationError("FFT size smaller than frame length");

  std::vector<double> emphasized(window.size());
  emphasized[0] = window[0];
  for (std::size_t i = 1; i < window.size(); ++i) emphasized[i] = window[i] - cfg.pre_emphasis * window[i - 1];

  const int steps = mfcc_steps(window.size(), cfg);
  const int bins = cfg.fft_size / 2 + 1;
  const auto bank = mel_filterbank(cfg, sample_rate);
  std::vector<double> hamming(cfg.frame_length);
  for (int i = 0; i < cfg.frame_length; ++i)
    hamming[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (cfg.frame_length - 1));

  Eigen::FFT<double> fft;
  std::vector<double> frame(cfg.fft_size);
  std::vector<std::complex<double>> spectrum;
  std::vector<double> log_mel(cfg.mel_bands);
  ag::Tensor out({steps, kMfccCoefficients});
  const double norm0 = std::sqrt(1.0 / cfg.mel_bands), norm = std::sqrt(2.0 / cfg.mel_bands);
  for (int t = 0; t < steps; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int i = 0; i < cfg.frame_length; ++i) {
      const std::size_t src = static_cast<std::size_t>(t) * cfg.hop_length + i;
      frame[i] = src < emphasized.size() ? emphasized[src] * hamming[i] : 0.0;
    }
    fft.fwd(spectrum, frame);
    for (int m = 0; m < cfg.mel_bands; ++m) {
      double energy = 0.0;
      for (int k = 0; k < bins; ++k) energy += bank[m][k] * std::norm(spectrum[k]) / cfg.fft_size;
      log_mel[m] = std::log(std::max(energy, cfg.log_floor));
    }
    for (int c = 0; c < kMfccCoefficients; ++c) {
      double acc = 0.0;
      for (int m = 0; m < cfg.mel_bands; ++m) acc += log_mel[m] * std::cos(std::numbers::pi * c * (m + 0.5) / cfg.mel_bands);
      out[static_cast<std::size_t>(t) * kMfccCoefficients + c] = acc * (c == 0 ? norm0 : norm);
    }
  }
  return out;
}

}  // namespace au2av::media
