#pragma once

#include <string>
#include <vector>

#include "au2av/autograd/nn.hpp"
#include "au2av/stage1/networks.hpp"

namespace au2av::stage2 {

/// Architecture of the unpaired translation stage. Defaults are the 64x64 toy scale.
struct Stage2Config {
  int resolution = 64;        // square frames, multiple of 16
  int generator_width = 8;    // channels after the stem; doubles per downsampling
  int downsampling = 2;
  int residual_blocks = 4;    // AdaLIN residual blocks in the decoder
  int disc_width = 8;
  int local_depth = 2;        // stride-2 convs in the local head
  int global_depth = 4;       // stride-2 convs in the global head
  int predictor_width = 8;
  int past_frames = 2;        // t
  int landmark_width = 8;

  void validate() const;
  int bottleneck_channels() const { return generator_width << downsampling; }
  std::string describe() const;
  std::string fingerprint() const;
};

inline constexpr double kNormEpsilon = 1e-5;

/// Per-sample, per-channel standardization over space.
ag::Var instance_norm(const ag::Var& x);
/// Per-sample standardization over channels and space.
ag::Var layer_norm(const ag::Var& x);

/// gamma * (rho * IN(x) + (1 - rho) * LN(x)) + beta.
/// rho: [C]; gamma, beta: [B, C].
ag::Var adalin(const ag::Var& x, const ag::Var& rho, const ag::Var& gamma, const ag::Var& beta);

/// Clamps every entry named "*.rho" to [0, 1].
void clip_rho(ag::ParamStore& store);

struct CamOutput {
  ag::Var features;         // attended and fused, same shape as the input
  ag::Tensor attention_map; // [B,1,H,W], in [0,1]
  ag::Var cam_logit;        // [B]
};

/// Auxiliary classifier over global average and global max pooled features.
/// Its weights re-weight the channels; the two weighted copies are fused by
/// a 1x1 conv.
struct CamAttention {
  std::string name;
  int channels = 0;
  double slope = 0.0;  // activation after fusion: relu (0) or leaky relu

  void init(ag::ParamStore& store, ag::Rng& rng) const;
  CamOutput operator()(const ag::ParamStore& store, const ag::Var& x) const;
};

/// Encoder -> CAM -> AdaLIN decoder. Output in [-1,1], same shape as the input.
class TranslationGenerator {
 public:
  TranslationGenerator(std::string name, const Stage2Config& cfg);
  void init(ag::ParamStore& store, ag::Rng& rng) const;

  struct Output {
    ag::Var frame;
    ag::Var cam_logit;         // [B]
    ag::Tensor attention_map;  // [B,1,h,w] at the bottleneck
  };
  Output operator()(const ag::ParamStore& store, const ag::Var& x) const;
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  int resolution_;
  int width_;
  int down_;
  int res_blocks_;
  ag::Conv2d stem_;
  std::vector<ag::Conv2d> downs_;
  CamAttention cam_;
  ag::Linear mlp0_, mlp1_;
  std::vector<ag::Conv2d> res_convs_;   // two per block
  std::vector<ag::Conv2d> up_convs_;
  ag::Conv2d out_;
  std::vector<std::pair<std::string, int>> norms_;  // AdaLIN layers in order: name, channels
};

struct HeadOutput {
  ag::Var score;             // [B,1,h,w] raw
  ag::Var cam_logit;         // [B]
  ag::Tensor attention_map;
};

struct Stage2DiscOutput {
  HeadOutput local;
  HeadOutput global;
};

/// Two PatchGAN heads on the full frame: a shallow local head and a deep
/// global head, each with its own CAM classifier.
class Stage2Discriminator {
 public:
  Stage2Discriminator(std::string name, const Stage2Config& cfg);
  void init(ag::ParamStore& store, ag::Rng& rng) const;
  Stage2DiscOutput operator()(const ag::ParamStore& store, const ag::Var& x) const;
  int local_receptive_field() const { return receptive_field(local_); }
  int global_receptive_field() const { return receptive_field(global_); }

 private:
  struct Head {
    std::vector<ag::Conv2d> convs;
    CamAttention cam;
    ag::Conv2d score;
  };
  static Head make_head(const std::string& prefix, int depth, int width);
  static void init_head(const Head& h, ag::ParamStore& store, ag::Rng& rng);
  static HeadOutput run_head(const Head& h, const ag::ParamStore& store, const ag::Var& x);
  static int receptive_field(const Head& h);

  std::string name_;
  int resolution_;
  Head local_, global_;
};

/// UNet next-frame predictor over t channel-stacked frames.
class UNetPredictor {
 public:
  UNetPredictor(std::string name, const Stage2Config& cfg);
  void init(ag::ParamStore& store, ag::Rng& rng) const;
  /// Exactly t frames [B,3,H,W] -> [B,3,H,W] in [-1,1].
  ag::Var operator()(const ag::ParamStore& store, const std::vector<ag::Var>& past) const;
  /// Channel-stacked input [B,3t,H,W] -> [B,3,H,W].
  ag::Var forward_stacked(const ag::ParamStore& store, const ag::Var& stacked) const;
  int past_frames() const { return past_; }

 private:
  int past_;
  ag::Conv2d enc0_, enc1_, enc2_, dec1_, dec0_, out_;
};

/// Every stage-2 network with its parameter store.
struct Stage2Model {
  Stage2Config config;
  TranslationGenerator gen_s2t, gen_t2s;
  Stage2Discriminator disc_t, disc_s;
  UNetPredictor predictor_s, predictor_t;
  stage1::LandmarkHead landmark_head;

  ag::ParamStore gen_s2t_params, gen_t2s_params;
  ag::ParamStore disc_t_params, disc_s_params;
  ag::ParamStore predictor_s_params, predictor_t_params;
  ag::ParamStore landmark_params;

  explicit Stage2Model(const Stage2Config& cfg);
  static Stage2Model create(const Stage2Config& cfg, unsigned seed);
  Stage2Model clone() const;

  TranslationGenerator::Output to_target(const ag::Var& x) const;
  TranslationGenerator::Output to_source(const ag::Var& y) const;
  ag::Var predict_source(const std::vector<ag::Var>& past) const;
  ag::Var predict_target(const std::vector<ag::Var>& past) const;

  /// Stores and their checkpoint file stems, in a fixed order.
  std::vector<std::pair<std::string, ag::ParamStore*>> stores();
};

/// Landmark head configuration shared with stage 1.
stage1::Stage1Config landmark_config(const Stage2Config& cfg);

}  // namespace au2av::stage2
