#include "au2av/stage2/losses.hpp"

#include <cmath>

#include "au2av/error.hpp"

namespace au2av::stage2 {

using ag::Var;

Var lsgan_loss(const std::vector<Var>& real_scores, const std::vector<Var>& fake_scores, Side side) {
  if (fake_scores.empty()) throw ValidationError("LSGAN loss needs at least one head");
  if (side == Side::kDiscriminator && real_scores.size() != fake_scores.size())
    throw ValidationError("LSGAN loss: real and fake head counts differ");
  Var total = ag::scalar(0.0);
  for (std::size_t i = 0; i < fake_scores.size(); ++i) {
    if (side == Side::kGenerator) {
      total = total + ag::mean(ag::square(fake_scores[i] - 1.0));
    } else {
      total = total + ag::mean(ag::square(real_scores[i] - 1.0)) + ag::mean(ag::square(fake_scores[i]));
    }
  }
  return total;
}

std::vector<Var> head_scores(const Stage2DiscOutput& out) { return {out.local.score, out.global.score}; }
std::vector<Var> head_cam_logits(const Stage2DiscOutput& out) { return {out.local.cam_logit, out.global.cam_logit}; }

Var cam_loss(const Var& positive, const Var& negative) {
  return ag::mean(ag::softplus(-positive)) + ag::mean(ag::softplus(negative));
}

Var cam_adversarial_loss(const std::vector<Var>& fake_logits) {
  Var total = ag::scalar(0.0);
  for (const Var& l : fake_logits) total = total + ag::mean(ag::softplus(-l));
  return total;
}

Var recycle_loss(const std::vector<Var>& frames, int past, const FrameMap& forward, const NextFrame& predict,
                 const FrameMap& back) {
  if (past < 1 || static_cast<int>(frames.size()) < past + 1)
    throw ValidationError("recycle loss needs " + std::to_string(past + 1) + " frames, got " +
                          std::to_string(frames.size()));
  std::vector<Var> mapped;
  for (int i = 0; i < past; ++i) mapped.push_back(forward(frames[i]));
  const Var rebuilt = back(predict(mapped));
  return ag::mean(ag::square(frames[past] - rebuilt));
}

Var identity_loss(const Var& x, const Var& mapped) {
  if (x.shape() != mapped.shape()) throw ValidationError("identity loss: shape mismatch");
  return ag::mean(ag::abs(x - mapped));
}

Var lip_sync_loss(const Var& x, const Var& cycled) { return stage1::reconstruction_loss_lower(x, cycled); }

Var stage2_blink_loss(const Var& real_landmarks, const Var& cycled_landmarks) {
  return stage1::blink_loss(stage1::eye_aspect_ratio(real_landmarks), stage1::eye_aspect_ratio(cycled_landmarks));
}

Var predictor_loss(const std::vector<Var>& frames, int past, const NextFrame& predict) {
  const int n = static_cast<int>(frames.size());
  if (past < 1 || n < past + 1)
    throw ValidationError("predictor loss needs at least " + std::to_string(past + 1) + " frames, got " +
                          std::to_string(n));
  Var total = ag::scalar(0.0);
  for (int i = 0; i + past < n; ++i) {
    const std::vector<Var> window(frames.begin() + i, frames.begin() + i + past);
    total = total + ag::mean(ag::square(frames[i + past] - predict(window)));
  }
  return total;
}

void Stage2LossWeights::validate() const {
  for (double w : {cam, recycle, identity, lip, blink})
    if (!std::isfinite(w) || w < 0.0) throw ValidationError("stage-2 loss weights must be finite and >= 0");
}

std::string term_name(Stage2Term t) {
  switch (t) {
    case Stage2Term::kAdversarial: return "gan";
    case Stage2Term::kCam: return "cam";
    case Stage2Term::kRecycle: return "recycle";
    case Stage2Term::kIdentity: return "identity";
    case Stage2Term::kLipSync: return "lip_sync";
    case Stage2Term::kBlink: return "blink";
    case Stage2Term::kPredictor: return "predictor";
  }
  return "unknown";
}

const std::vector<Stage2Term>& generator_terms() {
  static const std::vector<Stage2Term> terms{Stage2Term::kAdversarial, Stage2Term::kCam,     Stage2Term::kRecycle,
                                             Stage2Term::kIdentity,    Stage2Term::kLipSync, Stage2Term::kBlink};
  return terms;
}

Var stage2_objective(const Stage2Bundle& bundle, const Stage2LossWeights& w) {
  const std::map<Stage2Term, double> weight{{Stage2Term::kAdversarial, 1.0}, {Stage2Term::kCam, w.cam},
                                            {Stage2Term::kRecycle, w.recycle}, {Stage2Term::kIdentity, w.identity},
                                            {Stage2Term::kLipSync, w.lip},     {Stage2Term::kBlink, w.blink}};
  Var total = ag::scalar(0.0);
  for (Stage2Term t : generator_terms()) {
    const double lambda = weight.at(t);
    if (lambda == 0.0) continue;
    auto it = bundle.find(t);
    if (it == bundle.end()) throw ValidationError("stage-2 objective lacks the " + term_name(t) + " term");
    total = total + it->second * lambda;
  }
  return total;
}

}  // namespace au2av::stage2
