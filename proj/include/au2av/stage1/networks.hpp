#pragma once

#include <string>
#include <vector>

#include "au2av/autograd/nn.hpp"

namespace au2av::stage1 {

/// Architecture of every stage-1 network. Defaults are the 64x64 toy scale.
struct Stage1Config {
  int resolution = 64;          // square frames, power of two, >= 16
  int embedding_dim = 256;      // speech embedding length
  int encoder_channels = 16;
  int encoder_hidden = 32;      // per direction
  int generator_width = 32;     // channels at the 4x4 seed
  int generator_min_width = 8;
  int modulation_hidden = 16;
  int disc_width = 16;
  int temporal_window = 4;      // L; the temporal discriminator sees L+1 frames
  int sync_resolution = 224;
  int sync_width = 8;
  int sync_dim = 256;
  int landmark_width = 8;

  void validate() const;
  int temporal_frames() const { return temporal_window + 1; }
  /// Canonical key=value listing of the architecture, one per line.
  std::string describe() const;
  /// Stable hash of describe(); stored in every checkpoint header.
  std::string fingerprint() const;
};

struct SpadeModulation {
  ag::Var gamma;
  ag::Var beta;
};

/// One modulation network: identity image -> per-pixel (gamma, beta).
struct SpadeNorm {
  std::string name;
  int channels = 0;
  int hidden = 0;

  void init(ag::ParamStore& store, ag::Rng& rng) const;
  SpadeModulation modulation(const ag::ParamStore& store, const ag::Var& identity, int height, int width) const;
};

inline constexpr double kSpadeEpsilon = 1e-5;

/// standardize(x) * (1 + gamma) + beta, statistics over batch and space.
ag::Var spade_normalize(const ag::Var& activation, const ag::Var& identity, const ag::ParamStore& store,
                        const SpadeNorm& norm);

/// Identity image resampled to the activation grid: exact area average when
/// the size divides evenly, bilinear otherwise.
ag::Var resample_identity(const ag::Var& identity, int height, int width);

/// Two convolutions over the MFCC matrix, then a bidirectional tanh RNN over
/// time, mean pooled and projected to the embedding.
class SpeechEncoder {
 public:
  explicit SpeechEncoder(const Stage1Config& cfg);
  void init(ag::ParamStore& store, ag::Rng& rng) const;
  /// mfcc: [B, steps, 13]. Returns [B, embedding_dim].
  ag::Var operator()(const ag::ParamStore& store, const ag::Var& mfcc) const;

 private:
  int hidden_;
  int embedding_dim_;
  ag::Conv2d conv0_, conv1_;
  ag::Linear fwd_in_, fwd_rec_, bwd_in_, bwd_rec_, out_;
};

/// Speech embedding seeds a 4x4 tensor; every upsampling block is SPADE
/// modulated by the identity image.
class SpadeGenerator {
 public:
  explicit SpadeGenerator(const Stage1Config& cfg);
  void init(ag::ParamStore& store, ag::Rng& rng) const;
  /// identity: [B,3,R,R] in [-1,1]; embedding: [B,E]. Returns [B,3,R,R] in [-1,1].
  ag::Var operator()(const ag::ParamStore& store, const ag::Var& identity, const ag::Var& embedding) const;
  const std::vector<SpadeNorm>& norms() const { return norms_; }

 private:
  int resolution_;
  int embedding_dim_;
  std::vector<int> widths_;
  ag::Linear seed_;
  std::vector<SpadeNorm> norms_;
  std::vector<ag::Conv2d> convs_;
};

struct DiscriminatorOutput {
  std::vector<ag::Var> scores;                  // per scale, probabilities
  std::vector<std::vector<ag::Var>> features;   // per scale, per layer
};

/// PatchGAN at scales x1, x1/2, x1/4 (separate weights per scale).
class MultiScaleDiscriminator {
 public:
  static constexpr int kScales = 3;
  MultiScaleDiscriminator(std::string name, int in_channels, int out_channels, int width);
  void init(ag::ParamStore& store, ag::Rng& rng) const;
  DiscriminatorOutput operator()(const ag::ParamStore& store, const ag::Var& x) const;
  /// Input actually seen by scale `k` (0-based).
  static ag::Var scale_input(const ag::Var& x, int k);
  int in_channels() const { return in_channels_; }

 private:
  int in_channels_;
  std::vector<std::vector<ag::Conv2d>> layers_;
};

struct SyncPair {
  ag::Var video;  // [B, dim]
  ag::Var audio;  // [B, dim]
};

class SyncDiscriminator {
 public:
  static constexpr int kFrames = 5;
  explicit SyncDiscriminator(const Stage1Config& cfg);
  void init(ag::ParamStore& store, ag::Rng& rng) const;
  /// lower_halves: 5 tensors [B,3,h,w]; mfcc [B, steps, 13].
  SyncPair operator()(const ag::ParamStore& store, const std::vector<ag::Var>& lower_halves, const ag::Var& mfcc) const;

 private:
  int resolution_;
  std::vector<ag::Conv2d> video_convs_;
  ag::Linear video_fc_;
  std::vector<ag::Conv2d> audio_convs_;
  ag::Linear audio_fc0_, audio_fc1_;
};

/// Regresses the 12 eye landmarks (24 numbers, pixel units) from a frame so
/// the blink loss can be evaluated differentiably on generated frames.
class LandmarkHead {
 public:
  explicit LandmarkHead(const Stage1Config& cfg);
  void init(ag::ParamStore& store, ag::Rng& rng) const;
  /// frames [B,3,R,R] -> [B,24] (left p1..p6 then right p1..p6, x y).
  ag::Var operator()(const ag::ParamStore& store, const ag::Var& frames) const;

 private:
  int resolution_;
  std::vector<ag::Conv2d> convs_;
  ag::Linear fc_;
};

/// Descriptors plus parameter stores of the whole stage-1 model.
/// The speech encoder lives in the generator store under "encoder.".
struct Stage1Model {
  Stage1Config config;
  SpeechEncoder encoder;
  SpadeGenerator generator;
  MultiScaleDiscriminator frame_disc;
  MultiScaleDiscriminator temporal_disc;
  SyncDiscriminator sync_disc;
  LandmarkHead landmark_head;

  ag::ParamStore generator_params;
  ag::ParamStore frame_params;
  ag::ParamStore temporal_params;
  ag::ParamStore sync_params;
  ag::ParamStore landmark_params;

  explicit Stage1Model(const Stage1Config& cfg);
  /// Fresh weights from `seed`.
  static Stage1Model create(const Stage1Config& cfg, unsigned seed);
  Stage1Model clone() const;

  ag::Var encode_speech(const ag::Var& mfcc) const;
  ag::Var encode_speech(const ag::Tensor& window) const;
  ag::Var generate_frame(const ag::Var& identity, const ag::Var& embedding) const;
  DiscriminatorOutput frame_discriminate(const ag::Var& frame, const ag::Var& identity) const;
  /// `frames` must hold exactly L+1 tensors [B,3,R,R]; score channel i
  /// belongs to window position i.
  DiscriminatorOutput temporal_discriminate(const std::vector<ag::Var>& frames) const;
  SyncPair sync_embed(const std::vector<ag::Var>& lower_halves, const ag::Var& mfcc) const;
  ag::Var predict_landmarks(const ag::Var& frames) const;
};

/// Copies entries of `pretrained` whose names start with `prefix` into
/// `store` (e.g. externally trained encoder weights). Returns the count.
int load_pretrained(ag::ParamStore& store, const ag::ParamStore& pretrained, const std::string& prefix);

}  // namespace au2av::stage1
