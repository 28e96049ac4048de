#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "au2av/stage1/losses.hpp"
#include "au2av/stage2/networks.hpp"

namespace au2av::stage2 {

using stage1::Side;

/// Least-squares adversarial loss on raw scores, summed over heads.
/// Discriminator: E[(D(real) - 1)^2] + E[D(fake)^2]; generator: E[(D(fake) - 1)^2].
ag::Var lsgan_loss(const std::vector<ag::Var>& real_scores, const std::vector<ag::Var>& fake_scores, Side side);

/// Score maps of both heads.
std::vector<ag::Var> head_scores(const Stage2DiscOutput& out);
/// CAM logits of both heads.
std::vector<ag::Var> head_cam_logits(const Stage2DiscOutput& out);

/// Binary cross-entropy pushing `positive` logits to 1 and `negative` to 0
/// (mean over each batch, summed). With a generator's classifier the
/// positives are its source-domain inputs; with a discriminator's, the real
/// target frames.
ag::Var cam_loss(const ag::Var& positive, const ag::Var& negative);

/// Generator side of the discriminator's CAM classifier: its logits on
/// translated frames should read "real".
ag::Var cam_adversarial_loss(const std::vector<ag::Var>& fake_logits);

using FrameMap = std::function<ag::Var(const ag::Var&)>;
using NextFrame = std::function<ag::Var(const std::vector<ag::Var>&)>;

/// Mean square of x[past] - back(predict(forward(x[0]), ..., forward(x[past-1]))).
ag::Var recycle_loss(const std::vector<ag::Var>& frames, int past, const FrameMap& forward, const NextFrame& predict,
                     const FrameMap& back);

/// Mean |x - mapped|.
ag::Var identity_loss(const ag::Var& x, const ag::Var& mapped);

/// Mean |x - cycled| over rows [H/2, H).
ag::Var lip_sync_loss(const ag::Var& x, const ag::Var& cycled);

/// Batch mean of |EAR(real) - EAR(cycled)| from [B,24] landmark rows.
ag::Var stage2_blink_loss(const ag::Var& real_landmarks, const ag::Var& cycled_landmarks);

/// Sum over every window i of mean square(x[i+past] - predict(x[i..i+past))).
ag::Var predictor_loss(const std::vector<ag::Var>& frames, int past, const NextFrame& predict);

struct Stage2LossWeights {
  double cam = 2000.0;
  double recycle = 100.0;
  double identity = 10.0;
  double lip = 100.0;
  double blink = 100.0;

  void validate() const;
};

enum class Stage2Term { kAdversarial, kCam, kRecycle, kIdentity, kLipSync, kBlink, kPredictor };

std::string term_name(Stage2Term t);
const std::vector<Stage2Term>& generator_terms();

using Stage2Bundle = std::map<Stage2Term, ag::Var>;

/// Adversarial + weighted generator terms. Terms whose weight is 0 are left
/// out of the sum entirely.
ag::Var stage2_objective(const Stage2Bundle& bundle, const Stage2LossWeights& weights);

}  // namespace au2av::stage2
