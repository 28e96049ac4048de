#include "au2av/stage1/losses.hpp"

#include <cmath>

#include "au2av/error.hpp"

namespace au2av::stage1 {

using ag::Var;

namespace {

Var safe_log(const Var& p) { return ag::log(ag::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon)); }

Var add(const Var& total, const Var& term) { return total.defined() ? total + term : term; }

void same_shape(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape())
    throw ValidationError(std::string(what) + ": shape mismatch " + ag::shape_string(a.shape()) + " vs " +
                          ag::shape_string(b.shape()));
}

}  // namespace

Var adversarial_loss(const std::vector<Var>& scores_real, const std::vector<Var>& scores_fake, Side side) {
  if (scores_fake.empty()) throw ValidationError("adversarial loss needs at least one scale");
  Var total;
  if (side == Side::kGenerator) {
    for (const auto& f : scores_fake) total = add(total, -ag::mean(safe_log(f)));
    return total;
  }
  if (scores_real.size() != scores_fake.size()) throw ValidationError("real and fake scale counts differ");
  for (std::size_t k = 0; k < scores_fake.size(); ++k)
    total = add(total, -ag::mean(safe_log(scores_real[k])) - ag::mean(safe_log(1.0 - scores_fake[k])));
  return total;
}

Var temporal_adversarial_loss(const std::vector<Var>& scores_real, const std::vector<Var>& scores_fake,
                              int window_length, Side side) {
  const int positions = window_length + 1;
  auto check = [&](const std::vector<Var>& maps) {
    for (const auto& m : maps)
      if (m.value().rank() != 4 || m.dim(1) != positions)
        throw ValidationError("temporal scores must have " + std::to_string(positions) + " channels, got " +
                              ag::shape_string(m.shape()));
  };
  check(scores_fake);
  if (side == Side::kDiscriminator) {
    check(scores_real);
    if (scores_real.size() != scores_fake.size()) throw ValidationError("real and fake scale counts differ");
  }
  Var total;
  for (int i = 0; i < positions; ++i) {
    std::vector<Var> r, f;
    for (const auto& m : scores_fake) f.push_back(ag::slice(m, 1, i, i + 1));
    if (side == Side::kDiscriminator)
      for (const auto& m : scores_real) r.push_back(ag::slice(m, 1, i, i + 1));
    total = add(total, adversarial_loss(r, f, side));
  }
  return total;
}

Var feature_matching_loss(const std::vector<std::vector<Var>>& real, const std::vector<std::vector<Var>>& fake) {
  if (real.size() != fake.size()) throw ValidationError("feature matching: scale count mismatch");
  Var total = ag::scalar(0.0);
  for (std::size_t k = 0; k < real.size(); ++k) {
    if (real[k].size() != fake[k].size()) throw ValidationError("feature matching: layer count mismatch");
    for (std::size_t i = 0; i < real[k].size(); ++i) {
      same_shape(real[k][i], fake[k][i], "feature matching");
      total = total + ag::mean(ag::abs(real[k][i] - fake[k][i]));
    }
  }
  return total;
}

Var perceptual_loss(const Var& a, const Var& b, const FeatureProvider& provider, double weight) {
  same_shape(a, b, "perceptual loss");
  const auto fa = provider.features(a);
  const auto fb = provider.features(b);
  if (fa.empty() || fa.size() != fb.size()) throw ProviderError("feature provider " + provider.name() + " failed");
  Var total = ag::scalar(0.0);
  for (std::size_t i = 0; i < fa.size(); ++i) total = total + ag::mean(ag::abs(fa[i] - fb[i]));
  return total * weight;
}

Var reconstruction_loss_lower(const Var& real, const Var& generated) {
  same_shape(real, generated, "reconstruction loss");
  if (real.value().rank() != 4) throw ValidationError("reconstruction loss expects NCHW");
  const int h = real.dim(2);
  return ag::mean(ag::abs(ag::slice(real, 2, h / 2, h) - ag::slice(generated, 2, h / 2, h)));
}

Var contrastive_loss(const Var& video, const Var& audio, const std::vector<double>& labels, double margin) {
  if (!(margin > 0.0)) throw ValidationError("contrastive margin must be > 0");
  same_shape(video, audio, "contrastive loss");
  if (video.value().rank() != 2) throw ValidationError("contrastive loss expects [N, dim] embeddings");
  const int n = video.dim(0);
  if (n == 0) throw ValidationError("contrastive loss needs at least one pair");
  if (static_cast<int>(labels.size()) != n) throw ValidationError("one label per pair required");
  const Var sq = ag::sum(ag::square(video - audio), {1});  // [N,1]
  const Var y = ag::constant(ag::Tensor({n, 1}, labels));
  const Var d = ag::sqrt(sq + 1e-12);
  const Var gap = ag::relu(margin - d);
  return ag::sum(y * sq + (1.0 - y) * ag::square(gap)) / (2.0 * n);
}

std::vector<double> pair_distances(const Var& video, const Var& audio) {
  same_shape(video, audio, "pair distances");
  const ag::Tensor sq = ag::sum(ag::square(detach(video) - detach(audio)), {1}).value();
  std::vector<double> out;
  for (double v : sq.storage()) out.push_back(std::sqrt(v));
  return out;
}

double eye_aspect_ratio(const EyeLandmarkSet& eye) {
  auto dist = [](const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); };
  const double width = dist(eye.p[0], eye.p[3]);
  if (!(width > 1e-12)) throw ValidationError("degenerate eye: corner points coincide");
  return (dist(eye.p[1], eye.p[5]) + dist(eye.p[2], eye.p[4])) / width;
}

Var eye_aspect_ratio(const Var& landmarks) {
  if (landmarks.value().rank() != 2 || landmarks.dim(1) != 24) throw ValidationError("landmarks must be [B, 24]");
  auto coord = [&](int eye, int point, int axis) {
    const int c = eye * 12 + point * 2 + axis;
    return ag::slice(landmarks, 1, c, c + 1);
  };
  auto dist = [&](int eye, int a, int b) {
    const Var dx = coord(eye, a, 0) - coord(eye, b, 0);
    const Var dy = coord(eye, a, 1) - coord(eye, b, 1);
    return ag::sqrt(dx * dx + dy * dy + 1e-12);
  };
  Var total;
  for (int eye = 0; eye < 2; ++eye) {
    const Var ear = (dist(eye, 1, 5) + dist(eye, 2, 4)) / dist(eye, 0, 3);
    total = add(total, ear);
  }
  return ag::reshape(total * 0.5, {landmarks.dim(0)});
}

ag::Tensor landmarks_to_tensor(const std::vector<FaceLandmarks>& faces) {
  std::vector<double> v;
  for (const auto& f : faces)
    for (const auto* eye : {&f.left, &f.right})
      for (const auto& p : eye->p) {
        v.push_back(p.x);
        v.push_back(p.y);
      }
  return ag::Tensor({static_cast<int>(faces.size()), 24}, std::move(v));
}

double blink_loss(double ear_real, double ear_generated) { return std::abs(ear_real - ear_generated); }

Var blink_loss(const Var& ear_real, const Var& ear_generated) {
  same_shape(ear_real, ear_generated, "blink loss");
  return ag::mean(ag::abs(ear_real - ear_generated));
}

void Stage1LossWeights::validate() const {
  for (double w : {feature_matching, perceptual, contrastive, blink, reconstruction})
    if (!std::isfinite(w) || w < 0.0) throw ValidationError("loss weights must be finite and >= 0");
  if (!std::isfinite(margin) || margin <= 0.0) throw ValidationError("contrastive margin must be > 0");
}

std::string loss_name(LossTerm term) {
  switch (term) {
    case LossTerm::kAdversarial: return "gan";
    case LossTerm::kFeatureMatching: return "feature_matching";
    case LossTerm::kPerceptual: return "perceptual";
    case LossTerm::kReconstruction: return "reconstruction";
    case LossTerm::kContrastive: return "contrastive";
    case LossTerm::kTemporal: return "temporal";
    case LossTerm::kBlink: return "blink";
  }
  return "unknown";
}

std::set<LossTerm> active_losses(int phase) {
  if (phase < 1 || phase > 3) throw ValidationError("phase must be 1, 2 or 3");
  std::set<LossTerm> s{LossTerm::kAdversarial, LossTerm::kFeatureMatching, LossTerm::kPerceptual};
  if (phase >= 2) s.insert({LossTerm::kReconstruction, LossTerm::kContrastive, LossTerm::kTemporal});
  if (phase >= 3) s.insert(LossTerm::kBlink);
  return s;
}

double loss_weight(LossTerm term, const Stage1LossWeights& w) {
  switch (term) {
    case LossTerm::kFeatureMatching: return w.feature_matching;
    case LossTerm::kPerceptual: return w.perceptual;
    case LossTerm::kReconstruction: return w.reconstruction;
    case LossTerm::kContrastive: return w.contrastive;
    case LossTerm::kBlink: return w.blink;
    case LossTerm::kAdversarial:
    case LossTerm::kTemporal: return 1.0;
  }
  return 0.0;
}

Var stage1_objective(const LossBundle& bundle, const Stage1LossWeights& weights, int phase) {
  Var total = ag::scalar(0.0);
  for (LossTerm t : active_losses(phase)) {
    auto it = bundle.find(t);
    if (it == bundle.end() || !it->second.defined())
      throw ValidationError("phase " + std::to_string(phase) + " needs the " + loss_name(t) + " loss");
    const double w = loss_weight(t, weights);
    if (w != 0.0) total = total + it->second * w;
  }
  return total;
}

}  // namespace au2av::stage1
