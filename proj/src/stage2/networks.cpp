#include "au2av/stage2/networks.hpp"

#include <algorithm>
#include <cmath>

#include "au2av/error.hpp"
#include "au2av/hash.hpp"

namespace au2av::stage2 {

using ag::Var;

namespace {

Var channel_view(const Var& v, int channels) { return ag::reshape(v, {1, channels, 1, 1}); }

void require_frames(const Var& x, int resolution, const std::string& what) {
  if (x.value().rank() != 4 || x.dim(1) != 3 || x.dim(2) != resolution || x.dim(3) != resolution)
    throw ValidationError(what + " expects [B,3," + std::to_string(resolution) + "," + std::to_string(resolution) +
                          "], got " + ag::shape_string(x.shape()));
}

}  // namespace

void Stage2Config::validate() const {
  if (generator_width < 1 || disc_width < 1 || predictor_width < 1 || landmark_width < 1)
    throw ValidationError("stage-2 widths must be positive");
  if (downsampling < 1 || residual_blocks < 0) throw ValidationError("generator needs >= 1 downsampling and >= 0 residual blocks");
  if (local_depth < 1 || global_depth <= local_depth) throw ValidationError("global head must be deeper than the local head");
  if (past_frames < 1) throw ValidationError("predictor needs at least one past frame");
  const int multiple = 1 << std::max({global_depth, downsampling, 3});
  if (resolution < 16 || resolution % multiple != 0)
    throw ValidationError("stage-2 resolution must be a multiple of " + std::to_string(multiple));
}

std::string Stage2Config::describe() const {
  std::string out;
  auto put = [&](const char* k, int v) { out += std::string(k) + "=" + std::to_string(v) + "\n"; };
  put("resolution", resolution);
  put("generator_width", generator_width);
  put("downsampling", downsampling);
  put("residual_blocks", residual_blocks);
  put("disc_width", disc_width);
  put("local_depth", local_depth);
  put("global_depth", global_depth);
  put("predictor_width", predictor_width);
  put("past_frames", past_frames);
  put("landmark_width", landmark_width);
  return out;
}

std::string Stage2Config::fingerprint() const { return fnv1a_hex("stage2\n" + describe()); }

Var instance_norm(const Var& x) { return ag::standardize(x, {2, 3}, kNormEpsilon); }
Var layer_norm(const Var& x) { return ag::standardize(x, {1, 2, 3}, kNormEpsilon); }

Var adalin(const Var& x, const Var& rho, const Var& gamma, const Var& beta) {
  const int b = x.dim(0), c = x.dim(1);
  if (rho.numel() != static_cast<std::size_t>(c) || gamma.shape() != ag::Shape{b, c} || beta.shape() != ag::Shape{b, c})
    throw ValidationError("AdaLIN parameter shapes do not match " + ag::shape_string(x.shape()));
  const Var r = channel_view(rho, c);
  const Var mixed = r * instance_norm(x) + (1.0 - r) * layer_norm(x);
  return mixed * ag::reshape(gamma, {b, c, 1, 1}) + ag::reshape(beta, {b, c, 1, 1});
}

void clip_rho(ag::ParamStore& store) {
  for (const auto& n : store.names()) {
    if (n.size() < 4 || n.compare(n.size() - 4, 4, ".rho") != 0) continue;
    for (double& v : store.get(n).mutable_value().storage()) v = std::clamp(v, 0.0, 1.0);
  }
}

void CamAttention::init(ag::ParamStore& store, ag::Rng& rng) const {
  ag::Linear{name + ".gap", channels, 1, false}.init(store, rng);
  ag::Linear{name + ".gmp", channels, 1, false}.init(store, rng);
  store.add(name + ".bias", ag::Tensor({1}, 0.0));
  ag::Conv2d{name + ".fuse", 2 * channels, channels, 1, 1, 0}.init(store, rng);
}

CamOutput CamAttention::operator()(const ag::ParamStore& store, const Var& x) const {
  if (x.value().rank() != 4 || x.dim(1) != channels)
    throw ValidationError("CAM input must have " + std::to_string(channels) + " channels");
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const ag::Linear gap_fc{name + ".gap", channels, 1, false};
  const ag::Linear gmp_fc{name + ".gmp", channels, 1, false};
  const Var gap = ag::reshape(ag::mean(x, {2, 3}), {b, channels});
  const Var gmp = ag::reshape(ag::max(x, {2, 3}), {b, channels});
  const Var logit = ag::reshape(gap_fc(store, gap) + gmp_fc(store, gmp) + store.get(name + ".bias"), {b});

  const Var by_gap = x * channel_view(store.get(name + ".gap.weight"), channels);
  const Var by_gmp = x * channel_view(store.get(name + ".gmp.weight"), channels);
  Var fused = ag::Conv2d{name + ".fuse", 2 * channels, channels, 1, 1, 0}(store, ag::concat({by_gap, by_gmp}, 1));
  fused = slope > 0.0 ? ag::leaky_relu(fused, slope) : ag::relu(fused);

  // Channel-summed magnitude of the re-weighted features, scaled per sample to max 1.
  ag::Tensor map({b, 1, h, w}, 0.0);
  const auto& g = by_gap.value().storage();
  const auto& m = by_gmp.value().storage();
  auto& out = map.storage();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int n = 0; n < b; ++n) {
    double peak = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      double acc = 0.0;
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = (static_cast<std::size_t>(n) * channels + c) * plane + p;
        acc += std::abs(g[i]) + std::abs(m[i]);
      }
      out[n * plane + p] = acc;
      peak = std::max(peak, acc);
    }
    if (peak > 0.0)
      for (std::size_t p = 0; p < plane; ++p) out[n * plane + p] /= peak;
  }
  return {fused, std::move(map), logit};
}

TranslationGenerator::TranslationGenerator(std::string name, const Stage2Config& cfg)
    : name_(std::move(name)),
      resolution_((cfg.validate(), cfg.resolution)),
      width_(cfg.generator_width),
      down_(cfg.downsampling),
      res_blocks_(cfg.residual_blocks) {
  const int c = cfg.bottleneck_channels();
  // Convs followed by a normalization carry no bias: it would be cancelled.
  stem_ = {name_ + ".stem", 3, width_, 7, 1, 3, false};
  for (int k = 0; k < down_; ++k)
    downs_.push_back({name_ + ".down" + std::to_string(k), width_ << k, width_ << (k + 1), 3, 2, 1, false});
  cam_ = {name_ + ".cam", c, 0.0};
  mlp0_ = {name_ + ".mlp0", c, c};
  mlp1_ = {name_ + ".mlp1", c, c};
  for (int r = 0; r < res_blocks_; ++r) {
    const std::string p = name_ + ".res" + std::to_string(r);
    res_convs_.push_back({p + ".conv0", c, c, 3, 1, 1, false});
    res_convs_.push_back({p + ".conv1", c, c, 3, 1, 1, false});
    norms_.push_back({p + ".norm0", c});
    norms_.push_back({p + ".norm1", c});
  }
  for (int k = 0; k < down_; ++k) {
    const std::string p = name_ + ".up" + std::to_string(k);
    up_convs_.push_back({p + ".conv", c >> k, c >> (k + 1), 3, 1, 1, false});
    norms_.push_back({p + ".norm", c >> (k + 1)});
  }
  out_ = {name_ + ".out", width_, 3, 7, 1, 3};
}

void TranslationGenerator::init(ag::ParamStore& store, ag::Rng& rng) const {
  stem_.init(store, rng);
  for (const auto& d : downs_) d.init(store, rng);
  cam_.init(store, rng);
  mlp0_.init(store, rng);
  mlp1_.init(store, rng);
  const int c = cam_.channels;
  for (const auto& [n, ch] : norms_) {
    ag::Linear{n + ".gamma", c, ch}.init(store, rng);
    ag::Linear{n + ".beta", c, ch}.init(store, rng);
    // Residual blocks start near instance norm, upsampling blocks near layer norm.
    store.add(n + ".rho", ag::Tensor({ch}, n.find(".res") != std::string::npos ? 0.9 : 0.0));
  }
  for (const auto& r : res_convs_) r.init(store, rng);
  for (const auto& u : up_convs_) u.init(store, rng);
  out_.init(store, rng);
}

TranslationGenerator::Output TranslationGenerator::operator()(const ag::ParamStore& store, const Var& x) const {
  require_frames(x, resolution_, name_);
  Var h = ag::relu(instance_norm(stem_(store, x)));
  for (const auto& d : downs_) h = ag::relu(instance_norm(d(store, h)));
  CamOutput cam = cam_(store, h);
  h = cam.features;

  const int c = cam_.channels;
  const Var code = ag::relu(mlp1_(store, ag::relu(mlp0_(store, ag::reshape(ag::mean(h, {2, 3}), {h.dim(0), c})))));
  std::size_t norm_index = 0;
  auto norm = [&](const Var& v) {
    const auto& [n, ch] = norms_[norm_index++];
    const Var gamma = ag::Linear{n + ".gamma", c, ch}(store, code) + 1.0;
    const Var beta = ag::Linear{n + ".beta", c, ch}(store, code);
    return adalin(v, store.get(n + ".rho"), gamma, beta);
  };
  for (int r = 0; r < res_blocks_; ++r) {
    Var y = ag::relu(norm(res_convs_[2 * r](store, h)));
    y = norm(res_convs_[2 * r + 1](store, y));
    h = h + y;
  }
  for (const auto& u : up_convs_) h = ag::relu(norm(u(store, ag::upsample_nearest2d(h, 2))));
  return {ag::tanh(out_(store, h)), cam.cam_logit, std::move(cam.attention_map)};
}

Stage2Discriminator::Head Stage2Discriminator::make_head(const std::string& prefix, int depth, int width) {
  Head h;
  int in = 3, out = width;
  for (int k = 0; k < depth; ++k) {
    h.convs.push_back({prefix + ".conv" + std::to_string(k), in, out, 4, 2, 1});
    in = out;
    out *= 2;
  }
  h.cam = {prefix + ".cam", in, 0.2};
  h.score = {prefix + ".score", in, 1, 3, 1, 1};
  return h;
}

Stage2Discriminator::Stage2Discriminator(std::string name, const Stage2Config& cfg)
    : name_(std::move(name)),
      resolution_((cfg.validate(), cfg.resolution)),
      local_(make_head(name_ + ".local", cfg.local_depth, cfg.disc_width)),
      global_(make_head(name_ + ".global", cfg.global_depth, cfg.disc_width)) {}

void Stage2Discriminator::init_head(const Head& h, ag::ParamStore& store, ag::Rng& rng) {
  for (const auto& c : h.convs) c.init(store, rng);
  h.cam.init(store, rng);
  h.score.init(store, rng);
}

void Stage2Discriminator::init(ag::ParamStore& store, ag::Rng& rng) const {
  init_head(local_, store, rng);
  init_head(global_, store, rng);
}

HeadOutput Stage2Discriminator::run_head(const Head& h, const ag::ParamStore& store, const Var& x) {
  Var v = x;
  for (const auto& c : h.convs) v = ag::leaky_relu(c(store, v));
  CamOutput cam = h.cam(store, v);
  return {h.score(store, cam.features), cam.cam_logit, std::move(cam.attention_map)};
}

Stage2DiscOutput Stage2Discriminator::operator()(const ag::ParamStore& store, const Var& x) const {
  require_frames(x, resolution_, name_);
  return {run_head(local_, store, x), run_head(global_, store, x)};
}

int Stage2Discriminator::receptive_field(const Head& h) {
  int field = 1, jump = 1;
  auto add = [&](const ag::Conv2d& c) {
    field += (c.kernel - 1) * jump;
    jump *= c.stride;
  };
  for (const auto& c : h.convs) add(c);
  add(h.score);  // the 1x1 fusion leaves the field unchanged
  return field;
}

UNetPredictor::UNetPredictor(std::string name, const Stage2Config& cfg) : past_((cfg.validate(), cfg.past_frames)) {
  const int w = cfg.predictor_width;
  enc0_ = {name + ".enc0", 3 * past_, w};
  enc1_ = {name + ".enc1", w, 2 * w, 3, 2, 1};
  enc2_ = {name + ".enc2", 2 * w, 4 * w, 3, 2, 1};
  dec1_ = {name + ".dec1", 4 * w + 2 * w, 2 * w};
  dec0_ = {name + ".dec0", 2 * w + w, w};
  out_ = {name + ".out", w, 3};
}

void UNetPredictor::init(ag::ParamStore& store, ag::Rng& rng) const {
  for (const auto* c : {&enc0_, &enc1_, &enc2_, &dec1_, &dec0_, &out_}) c->init(store, rng);
}

Var UNetPredictor::forward_stacked(const ag::ParamStore& store, const Var& stacked) const {
  if (stacked.value().rank() != 4 || stacked.dim(1) != 3 * past_)
    throw ValidationError("predictor expects " + std::to_string(3 * past_) + " stacked channels, got " +
                          ag::shape_string(stacked.shape()));
  if (stacked.dim(2) % 4 != 0 || stacked.dim(3) % 4 != 0) throw ValidationError("predictor input must be divisible by 4");
  const Var e0 = ag::leaky_relu(enc0_(store, stacked));
  const Var e1 = ag::leaky_relu(enc1_(store, e0));
  const Var e2 = ag::leaky_relu(enc2_(store, e1));
  const Var d1 = ag::leaky_relu(dec1_(store, ag::concat({ag::upsample_nearest2d(e2, 2), e1}, 1)));
  const Var d0 = ag::leaky_relu(dec0_(store, ag::concat({ag::upsample_nearest2d(d1, 2), e0}, 1)));
  return ag::tanh(out_(store, d0));
}

Var UNetPredictor::operator()(const ag::ParamStore& store, const std::vector<Var>& past) const {
  if (static_cast<int>(past.size()) != past_)
    throw ValidationError("predictor expects exactly " + std::to_string(past_) + " past frames, got " +
                          std::to_string(past.size()));
  return forward_stacked(store, ag::concat(past, 1));
}

stage1::Stage1Config landmark_config(const Stage2Config& cfg) {
  stage1::Stage1Config c;
  c.resolution = cfg.resolution;
  c.landmark_width = cfg.landmark_width;
  return c;
}

Stage2Model::Stage2Model(const Stage2Config& cfg)
    : config((cfg.validate(), cfg)),
      gen_s2t("gen_s2t", cfg),
      gen_t2s("gen_t2s", cfg),
      disc_t("disc_t", cfg),
      disc_s("disc_s", cfg),
      predictor_s("predictor_s", cfg),
      predictor_t("predictor_t", cfg),
      landmark_head(landmark_config(cfg)) {}

Stage2Model Stage2Model::create(const Stage2Config& cfg, unsigned seed) {
  Stage2Model m(cfg);
  ag::Rng rng(seed);
  m.gen_s2t.init(m.gen_s2t_params, rng);
  m.gen_t2s.init(m.gen_t2s_params, rng);
  m.disc_t.init(m.disc_t_params, rng);
  m.disc_s.init(m.disc_s_params, rng);
  m.predictor_s.init(m.predictor_s_params, rng);
  m.predictor_t.init(m.predictor_t_params, rng);
  m.landmark_head.init(m.landmark_params, rng);
  return m;
}

Stage2Model Stage2Model::clone() const {
  Stage2Model m(config);
  m.gen_s2t_params = gen_s2t_params.clone();
  m.gen_t2s_params = gen_t2s_params.clone();
  m.disc_t_params = disc_t_params.clone();
  m.disc_s_params = disc_s_params.clone();
  m.predictor_s_params = predictor_s_params.clone();
  m.predictor_t_params = predictor_t_params.clone();
  m.landmark_params = landmark_params.clone();
  return m;
}

TranslationGenerator::Output Stage2Model::to_target(const Var& x) const { return gen_s2t(gen_s2t_params, x); }
TranslationGenerator::Output Stage2Model::to_source(const Var& y) const { return gen_t2s(gen_t2s_params, y); }
Var Stage2Model::predict_source(const std::vector<Var>& past) const { return predictor_s(predictor_s_params, past); }
Var Stage2Model::predict_target(const std::vector<Var>& past) const { return predictor_t(predictor_t_params, past); }

std::vector<std::pair<std::string, ag::ParamStore*>> Stage2Model::stores() {
  return {{"gen_s2t", &gen_s2t_params},         {"gen_t2s", &gen_t2s_params},
          {"disc_t", &disc_t_params},           {"disc_s", &disc_s_params},
          {"predictor_s", &predictor_s_params}, {"predictor_t", &predictor_t_params},
          {"landmark_head", &landmark_params}};
}

}  // namespace au2av::stage2
