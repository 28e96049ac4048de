#include "au2av/stage1/networks.hpp"

#include "au2av/error.hpp"
#include "au2av/hash.hpp"
#include "au2av/media/mfcc.hpp"

namespace au2av::stage1 {

using ag::Var;

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// Silence sits at the log floor (about -23 per band); bring cepstra near unit scale.
constexpr double kMfccScale = 1.0 / 20.0;

Var mfcc_image(const Var& mfcc) {
  if (mfcc.value().rank() != 3 || mfcc.dim(2) != media::kMfccCoefficients)
    throw ValidationError("MFCC input must be [B, steps, 13], got " + ag::shape_string(mfcc.shape()));
  return ag::reshape(mfcc, {mfcc.dim(0), 1, mfcc.dim(1), mfcc.dim(2)}) * kMfccScale;
}

Var flatten(const Var& x) {
  const int b = x.dim(0);
  return ag::reshape(x, {b, static_cast<int>(x.numel() / b)});
}

void require_image_batch(const Var& x, int channels, const char* what) {
  if (x.value().rank() != 4 || x.dim(1) != channels)
    throw ValidationError(std::string(what) + " must be [B," + std::to_string(channels) + ",H,W], got " +
                          ag::shape_string(x.shape()));
}

}  // namespace

void Stage1Config::validate() const {
  if (!power_of_two(resolution) || resolution < 16) throw ValidationError("resolution must be a power of two >= 16");
  if (embedding_dim < 1 || encoder_channels < 1 || encoder_hidden < 1 || generator_width < 1 ||
      generator_min_width < 1 || modulation_hidden < 1 || disc_width < 1 || sync_width < 1 || sync_dim < 1 ||
      landmark_width < 1)
    throw ValidationError("network widths must be positive");
  if (temporal_window < 0) throw ValidationError("temporal window must be >= 0");
  if (sync_resolution < 16 || sync_resolution % 16 != 0) throw ValidationError("sync resolution must be a multiple of 16");
}

std::string Stage1Config::describe() const {
  std::string out;
  auto put = [&](const char* k, int v) { out += std::string(k) + "=" + std::to_string(v) + "\n"; };
  put("resolution", resolution);
  put("embedding_dim", embedding_dim);
  put("encoder_channels", encoder_channels);
  put("encoder_hidden", encoder_hidden);
  put("generator_width", generator_width);
  put("generator_min_width", generator_min_width);
  put("modulation_hidden", modulation_hidden);
  put("disc_width", disc_width);
  put("temporal_window", temporal_window);
  put("sync_resolution", sync_resolution);
  put("sync_width", sync_width);
  put("sync_dim", sync_dim);
  put("landmark_width", landmark_width);
  return out;
}

std::string Stage1Config::fingerprint() const { return fnv1a_hex("stage1\n" + describe()); }

Var resample_identity(const Var& identity, int height, int width) {
  const int h = identity.dim(2), w = identity.dim(3);
  if (h == height && w == width) return identity;
  if (h % height == 0 && w % width == 0 && h / height == w / width) return ag::avg_pool2d(identity, h / height);
  return ag::resize_bilinear(identity, height, width);
}

void SpadeNorm::init(ag::ParamStore& store, ag::Rng& rng) const {
  ag::Conv2d{name + ".shared", 3, hidden}.init(store, rng);
  ag::Conv2d{name + ".gamma", hidden, channels}.init(store, rng);
  ag::Conv2d{name + ".beta", hidden, channels}.init(store, rng);
}

SpadeModulation SpadeNorm::modulation(const ag::ParamStore& store, const Var& identity, int height, int width) const {
  const Var img = resample_identity(identity, height, width);
  const Var shared = ag::relu(ag::Conv2d{name + ".shared", 3, hidden}(store, img));
  return {ag::Conv2d{name + ".gamma", hidden, channels}(store, shared),
          ag::Conv2d{name + ".beta", hidden, channels}(store, shared)};
}

Var spade_normalize(const Var& activation, const Var& identity, const ag::ParamStore& store, const SpadeNorm& norm) {
  require_image_batch(activation, norm.channels, "SPADE activation");
  require_image_batch(identity, 3, "identity image");
  const SpadeModulation mod = norm.modulation(store, identity, activation.dim(2), activation.dim(3));
  const Var normalized = ag::standardize(activation, {0, 2, 3}, kSpadeEpsilon);
  return normalized * (mod.gamma + 1.0) + mod.beta;
}

SpeechEncoder::SpeechEncoder(const Stage1Config& cfg)
    : hidden_(cfg.encoder_hidden),
      embedding_dim_(cfg.embedding_dim),
      conv0_{"encoder.conv0", 1, cfg.encoder_channels},
      conv1_{"encoder.conv1", cfg.encoder_channels, cfg.encoder_channels, 3, 2, 1} {
  const int freq = (media::kMfccCoefficients + 2 - 3) / 2 + 1;
  const int features = cfg.encoder_channels * freq;
  fwd_in_ = {"encoder.rnn_fwd.input", features, hidden_};
  fwd_rec_ = {"encoder.rnn_fwd.recurrent", hidden_, hidden_, false};
  bwd_in_ = {"encoder.rnn_bwd.input", features, hidden_};
  bwd_rec_ = {"encoder.rnn_bwd.recurrent", hidden_, hidden_, false};
  out_ = {"encoder.out", 2 * hidden_, embedding_dim_};
}

void SpeechEncoder::init(ag::ParamStore& store, ag::Rng& rng) const {
  conv0_.init(store, rng);
  conv1_.init(store, rng);
  for (const auto* l : {&fwd_in_, &fwd_rec_, &bwd_in_, &bwd_rec_, &out_}) l->init(store, rng);
}

Var SpeechEncoder::operator()(const ag::ParamStore& store, const Var& mfcc) const {
  Var x = ag::leaky_relu(conv0_(store, mfcc_image(mfcc)));
  x = ag::leaky_relu(conv1_(store, x));  // [B, C, T', F']
  const int b = x.dim(0), steps = x.dim(2);
  x = ag::permute(x, {0, 2, 1, 3});
  x = ag::reshape(x, {b, steps, static_cast<int>(x.numel() / (static_cast<std::size_t>(b) * steps))});
  std::vector<Var> inputs;
  for (int t = 0; t < steps; ++t) inputs.push_back(ag::reshape(ag::slice(x, 1, t, t + 1), {b, x.dim(2)}));

  auto run = [&](const ag::Linear& in, const ag::Linear& rec, bool reverse) {
    Var h = ag::constant(ag::Tensor({b, hidden_}, 0.0));
    Var total;
    for (int i = 0; i < steps; ++i) {
      const int t = reverse ? steps - 1 - i : i;
      h = ag::tanh(in(store, inputs[t]) + rec(store, h));
      total = total.defined() ? total + h : h;
    }
    return total / static_cast<double>(steps);
  };
  const Var pooled = ag::concat({run(fwd_in_, fwd_rec_, false), run(bwd_in_, bwd_rec_, true)}, 1);
  return out_(store, pooled);
}

SpadeGenerator::SpadeGenerator(const Stage1Config& cfg) : resolution_(cfg.resolution), embedding_dim_(cfg.embedding_dim) {
  int levels = 0;
  for (int r = 4; r < resolution_; r *= 2) ++levels;
  for (int k = 0; k <= levels; ++k) widths_.push_back(std::max(cfg.generator_min_width, cfg.generator_width >> (k / 2)));
  seed_ = {"generator.seed", embedding_dim_, widths_[0] * 16};
  for (int k = 0; k <= levels; ++k) {
    norms_.push_back({"generator.spade" + std::to_string(k), widths_[k], cfg.modulation_hidden});
    // Inner convs feed a batch standardization, which cancels any bias.
    const bool inner = k < levels;
    convs_.push_back({"generator.conv" + std::to_string(k), widths_[k], inner ? widths_[k + 1] : 3, 3, 1, 1, !inner});
  }
}

void SpadeGenerator::init(ag::ParamStore& store, ag::Rng& rng) const {
  seed_.init(store, rng);
  for (std::size_t k = 0; k < norms_.size(); ++k) {
    norms_[k].init(store, rng);
    convs_[k].init(store, rng);
  }
}

Var SpadeGenerator::operator()(const ag::ParamStore& store, const Var& identity, const Var& embedding) const {
  require_image_batch(identity, 3, "identity image");
  if (identity.dim(2) != resolution_ || identity.dim(3) != resolution_)
    throw ValidationError("identity image must be " + std::to_string(resolution_) + "x" + std::to_string(resolution_));
  if (embedding.value().rank() != 2 || embedding.dim(1) != embedding_dim_ || embedding.dim(0) != identity.dim(0))
    throw ValidationError("speech embedding must be [B," + std::to_string(embedding_dim_) + "], got " +
                          ag::shape_string(embedding.shape()));
  const int b = identity.dim(0);
  Var x = ag::reshape(seed_(store, embedding), {b, widths_[0], 4, 4});
  const std::size_t last = norms_.size() - 1;
  for (std::size_t k = 0; k < last; ++k) {
    x = convs_[k](store, ag::leaky_relu(spade_normalize(x, identity, store, norms_[k])));
    x = ag::upsample_nearest2d(x, 2);
  }
  x = convs_[last](store, ag::leaky_relu(spade_normalize(x, identity, store, norms_[last])));
  return ag::tanh(x);
}

MultiScaleDiscriminator::MultiScaleDiscriminator(std::string name, int in_channels, int out_channels, int width)
    : in_channels_(in_channels) {
  for (int k = 0; k < kScales; ++k) {
    const std::string p = name + ".scale" + std::to_string(k);
    layers_.push_back({{p + ".conv0", in_channels, width, 4, 2, 1},
                       {p + ".conv1", width, 2 * width, 4, 2, 1},
                       {p + ".conv2", 2 * width, 2 * width, 3, 1, 1},
                       {p + ".score", 2 * width, out_channels, 3, 1, 1}});
  }
}

void MultiScaleDiscriminator::init(ag::ParamStore& store, ag::Rng& rng) const {
  for (const auto& scale : layers_)
    for (const auto& l : scale) l.init(store, rng);
}

Var MultiScaleDiscriminator::scale_input(const Var& x, int k) {
  return k == 0 ? x : ag::avg_pool2d(x, 1 << k);
}

DiscriminatorOutput MultiScaleDiscriminator::operator()(const ag::ParamStore& store, const Var& x) const {
  require_image_batch(x, in_channels_, "discriminator input");
  if (x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0) throw ValidationError("discriminator input size must be a multiple of 16");
  DiscriminatorOutput out;
  for (int k = 0; k < kScales; ++k) {
    Var h = scale_input(x, k);
    std::vector<Var> feats;
    const auto& layers = layers_[k];
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
      h = ag::leaky_relu(layers[i](store, h));
      feats.push_back(h);
    }
    out.scores.push_back(ag::sigmoid(layers.back()(store, h)));
    out.features.push_back(std::move(feats));
  }
  return out;
}

SyncDiscriminator::SyncDiscriminator(const Stage1Config& cfg) : resolution_(cfg.sync_resolution) {
  const int w = cfg.sync_width;
  video_convs_ = {{"sync.video.conv0", 3 * kFrames, w, 5, 4, 2},
                  {"sync.video.conv1", w, 2 * w, 3, 2, 1},
                  {"sync.video.conv2", 2 * w, 2 * w, 3, 2, 1}};
  video_fc_ = {"sync.video.fc", 2 * w, cfg.sync_dim};
  audio_convs_ = {{"sync.audio.conv0", 1, w}, {"sync.audio.conv1", w, 2 * w, 3, 2, 1}};
  const int freq = (media::kMfccCoefficients + 2 - 3) / 2 + 1;
  audio_fc0_ = {"sync.audio.fc0", 2 * w * freq, 4 * w};
  audio_fc1_ = {"sync.audio.fc1", 4 * w, cfg.sync_dim};
}

void SyncDiscriminator::init(ag::ParamStore& store, ag::Rng& rng) const {
  for (const auto& c : video_convs_) c.init(store, rng);
  video_fc_.init(store, rng);
  for (const auto& c : audio_convs_) c.init(store, rng);
  audio_fc0_.init(store, rng);
  audio_fc1_.init(store, rng);
}

SyncPair SyncDiscriminator::operator()(const ag::ParamStore& store, const std::vector<Var>& lower_halves,
                                       const Var& mfcc) const {
  if (lower_halves.size() != kFrames)
    throw ValidationError("sync discriminator needs exactly 5 frames, got " + std::to_string(lower_halves.size()));
  std::vector<Var> resized;
  for (const auto& f : lower_halves) {
    require_image_batch(f, 3, "sync frame");
    resized.push_back(ag::resize_bilinear(f, resolution_, resolution_));
  }
  Var v = ag::concat(resized, 1);
  for (const auto& c : video_convs_) v = ag::leaky_relu(c(store, v));
  v = video_fc_(store, flatten(ag::mean(v, {2, 3})));

  Var a = mfcc_image(mfcc);
  if (a.dim(0) != v.dim(0)) throw ValidationError("sync audio and video batch sizes differ");
  for (const auto& c : audio_convs_) a = ag::leaky_relu(c(store, a));
  a = flatten(ag::mean(a, {2}));
  a = audio_fc1_(store, ag::relu(audio_fc0_(store, a)));
  return {v, a};
}

LandmarkHead::LandmarkHead(const Stage1Config& cfg) : resolution_(cfg.resolution) {
  const int w = cfg.landmark_width;
  convs_ = {{"landmarks.conv0", 3, w, 3, 2, 1}, {"landmarks.conv1", w, 2 * w, 3, 2, 1}, {"landmarks.conv2", 2 * w, 2 * w, 3, 2, 1}};
  const int side = resolution_ / 8;
  fc_ = {"landmarks.fc", 2 * w * side * side, 24};
}

void LandmarkHead::init(ag::ParamStore& store, ag::Rng& rng) const {
  for (const auto& c : convs_) c.init(store, rng);
  fc_.init(store, rng);
  // Start from small offsets around the image centre.
  store.get("landmarks.fc.weight").mutable_value() =
      ag::Tensor::randn(store.get("landmarks.fc.weight").shape(), rng, 0.01);
}

Var LandmarkHead::operator()(const ag::ParamStore& store, const Var& frames) const {
  require_image_batch(frames, 3, "landmark input");
  if (frames.dim(2) != resolution_ || frames.dim(3) != resolution_) throw ValidationError("landmark input size mismatch");
  Var h = frames;
  for (const auto& c : convs_) h = ag::leaky_relu(c(store, h));
  return (fc_(store, flatten(h)) + 0.5) * static_cast<double>(resolution_);
}

Stage1Model::Stage1Model(const Stage1Config& cfg)
    : config(cfg),
      encoder((cfg.validate(), cfg)),
      generator(cfg),
      frame_disc("frame_d", 6, 1, cfg.disc_width),
      temporal_disc("temporal_d", 3 * cfg.temporal_frames(), cfg.temporal_frames(), cfg.disc_width),
      sync_disc(cfg),
      landmark_head(cfg) {}

Stage1Model Stage1Model::create(const Stage1Config& cfg, unsigned seed) {
  Stage1Model m(cfg);
  ag::Rng rng(seed);
  m.encoder.init(m.generator_params, rng);
  m.generator.init(m.generator_params, rng);
  m.frame_disc.init(m.frame_params, rng);
  m.temporal_disc.init(m.temporal_params, rng);
  m.sync_disc.init(m.sync_params, rng);
  m.landmark_head.init(m.landmark_params, rng);
  return m;
}

Stage1Model Stage1Model::clone() const {
  Stage1Model m(config);
  m.generator_params = generator_params.clone();
  m.frame_params = frame_params.clone();
  m.temporal_params = temporal_params.clone();
  m.sync_params = sync_params.clone();
  m.landmark_params = landmark_params.clone();
  return m;
}

Var Stage1Model::encode_speech(const Var& mfcc) const { return encoder(generator_params, mfcc); }

Var Stage1Model::encode_speech(const ag::Tensor& window) const {
  if (window.rank() != 2) throw ValidationError("MFCC window must be [steps, 13]");
  return encode_speech(Var(window.reshaped({1, window.dim(0), window.dim(1)})));
}

Var Stage1Model::generate_frame(const Var& identity, const Var& embedding) const {
  return generator(generator_params, identity, embedding);
}

DiscriminatorOutput Stage1Model::frame_discriminate(const Var& frame, const Var& identity) const {
  require_image_batch(frame, 3, "frame");
  if (frame.shape() != identity.shape()) throw ValidationError("frame and identity image shapes differ");
  return frame_disc(frame_params, ag::concat({frame, identity}, 1));
}

DiscriminatorOutput Stage1Model::temporal_discriminate(const std::vector<Var>& frames) const {
  if (static_cast<int>(frames.size()) != config.temporal_frames())
    throw ValidationError("temporal window needs " + std::to_string(config.temporal_frames()) + " frames, got " +
                          std::to_string(frames.size()));
  return temporal_disc(temporal_params, ag::concat(frames, 1));
}

SyncPair Stage1Model::sync_embed(const std::vector<Var>& lower_halves, const Var& mfcc) const {
  return sync_disc(sync_params, lower_halves, mfcc);
}

Var Stage1Model::predict_landmarks(const Var& frames) const { return landmark_head(landmark_params, frames); }

int load_pretrained(ag::ParamStore& store, const ag::ParamStore& pretrained, const std::string& prefix) {
  int copied = 0;
  for (const auto& name : pretrained.names()) {
    if (name.rfind(prefix, 0) != 0) continue;
    ag::Var& dst = store.get(name);
    if (dst.shape() != pretrained.get(name).shape()) throw ValidationError("pretrained shape mismatch for " + name);
    dst.mutable_value() = pretrained.get(name).value();
    ++copied;
  }
  return copied;
}

}  // namespace au2av::stage1
