#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "au2av/media/video.hpp"
#include "au2av/providers.hpp"

namespace au2av::eval {

/// PSNR of identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(max^2 / MSE) over every channel.
double psnr(const media::Image& a, const media::Image& b, double max_value = 1.0);
double psnr(const std::vector<double>& a, const std::vector<double>& b, double max_value);

/// Mean SSIM of the luma planes over every full 11x11 Gaussian window
/// (sigma 1.5); `data_range` sets the stabilizers C1 = (0.01 L)^2, C2 = (0.03 L)^2.
double ssim(const media::Image& a, const media::Image& b, double data_range = 1.0);
double ssim_gray(const std::vector<double>& a, const std::vector<double>& b, int height, int width,
                 double data_range);

struct CpbdSettings {
  int block = 64;                  // analysis block edge length
  double edge_block_ratio = 0.002;  // edge pixels a block needs to count
  double edge_threshold = 0.1;     // edge if |dI/dx| >= this fraction of the image max
  double contrast_split = 50.0;    // on the 0..255 scale
  double jnb_low_contrast = 5.0;   // just-noticeable blur width, contrast <= split
  double jnb_high_contrast = 3.0;
  double beta = 3.6;
  double p_jnb = 0.63;
};

/// Sharpness in [0,1]: share of edges whose width-based blur probability
/// stays under the just-noticeable level. Edge-free images score 0.
double cpbd(const media::Image& image, const CpbdSettings& settings = {});

struct KidSettings {
  int subsets = 100;
  int subset_size = 100;
  unsigned seed = 0;
};

struct KidResult {
  double value = 0.0;
  double std = 0.0;
};

/// Unbiased MMD^2 with kernel (x.y/d + 1)^3 (rows are samples). Sets no
/// larger than `subset_size` are scored once in full (std 0); larger ones
/// are resampled without replacement.
KidResult kid(const std::vector<std::vector<double>>& real, const std::vector<std::vector<double>>& fake,
              const KidSettings& settings = {});

inline constexpr double kAcdCosineThreshold = 0.02;
inline constexpr double kAcdEuclideanThreshold = 0.20;

struct AcdResult {
  double cosine = 0.0;
  double euclidean = 0.0;
  bool cosine_pass() const { return cosine <= kAcdCosineThreshold; }
  bool euclidean_pass() const { return euclidean <= kAcdEuclideanThreshold; }
};

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);
double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b);

/// Mean distances from every frame's embedding to the reference's. Throws
/// ProviderError naming the frames the provider failed on.
AcdResult acd(const std::vector<media::Image>& frames, const media::Image& reference,
              const EmbeddingProvider& provider);

struct BlinkSettings {
  double threshold = 0.2;
  int consecutive_min = 2;
};

/// Runs of at least `consecutive_min` frames below the threshold that later
/// recover to it or above.
int count_blinks(const std::vector<double>& ear, const BlinkSettings& settings = {});
double blinks_per_sec(const std::vector<double>& ear, double fps, const BlinkSettings& settings = {});

/// Word edit distance (substitutions + deletions + insertions).
int word_edit_distance(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis);
/// Edit distance over the reference length; may exceed 1.
double wer(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis);

struct MetricEntry {
  std::string name;
  std::optional<double> value;
  std::optional<double> std;
  std::optional<bool> passed;
  bool skipped = false;
  std::string note;

  friend bool operator==(const MetricEntry&, const MetricEntry&) = default;
};

struct MetricReport {
  std::vector<MetricEntry> metrics;
  std::vector<std::string> inputs;
  std::map<std::string, std::string> providers;
  std::string config_hash;

  const MetricEntry& at(const std::string& name) const;
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
  void write(const std::filesystem::path& file) const;
  static MetricReport read(const std::filesystem::path& file);
  /// Fixed-order plain-text table.
  std::string table() const;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Report order; every report lists each of these exactly once.
const std::vector<std::string>& metric_names();

using BlinkCounter = std::function<int(const std::vector<double>& ear)>;

struct EvalProviders {
  const EmbeddingProvider* inception = nullptr;  // KID
  const EmbeddingProvider* identity = nullptr;   // ACD
  const LandmarkProvider* landmarks = nullptr;   // blinks/sec
  const LipReader* lip_reader = nullptr;         // WER
  std::optional<std::vector<std::string>> transcript;  // else the lip reader on the reference
  BlinkCounter blink_counter;                    // else thresholded EAR runs
};

struct EvalSettings {
  double max_value = 1.0;
  CpbdSettings cpbd;
  KidSettings kid;
  BlinkSettings blink;
  std::optional<media::Image> identity_reference;  // else the reference clip's first frame
};

/// Every metric of `metric_names()`; those lacking a provider are marked
/// skipped. Frame counts and rates of the two clips must match.
MetricReport evaluate_clip(const media::TalkingClip& generated, const media::TalkingClip& reference,
                           const EvalProviders& providers, const EvalSettings& settings = {});

/// Mean of both eyes' aspect ratios.
double face_ear(const FaceLandmarks& face);

}  // namespace au2av::eval
