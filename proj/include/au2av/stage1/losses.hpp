#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "au2av/autograd/ops.hpp"
#include "au2av/providers.hpp"

namespace au2av::stage1 {

enum class Side { kGenerator, kDiscriminator };

/// Probabilities are clamped to [eps, 1 - eps] before taking logs.
inline constexpr double kProbabilityEpsilon = 1e-7;

/// Discriminator: -E[log D(x)] - E[log(1 - D(G(z)))]; generator:
/// -E[log D(G(z))]. Summed over scales; `real` is unused on the generator side.
ag::Var adversarial_loss(const std::vector<ag::Var>& scores_real, const std::vector<ag::Var>& scores_fake, Side side);

/// Per-scale maps [B, L+1, h, w] where channel i scores window position i;
/// sums the per-position adversarial terms.
ag::Var temporal_adversarial_loss(const std::vector<ag::Var>& scores_real, const std::vector<ag::Var>& scores_fake,
                                  int window_length, Side side);

/// Sum over scales and layers of the mean absolute feature difference.
ag::Var feature_matching_loss(const std::vector<std::vector<ag::Var>>& real,
                              const std::vector<std::vector<ag::Var>>& fake);

ag::Var perceptual_loss(const ag::Var& a, const ag::Var& b, const FeatureProvider& provider, double weight = 1.0);

/// Mean absolute difference over rows [H/2, H).
ag::Var reconstruction_loss_lower(const ag::Var& real, const ag::Var& generated);

/// (1/2N) sum [y d^2 + (1-y) max(margin - d, 0)^2], d = ||v - a||.
ag::Var contrastive_loss(const ag::Var& video, const ag::Var& audio, const std::vector<double>& labels, double margin);

/// Row-wise embedding distances ||v_n - a_n||.
std::vector<double> pair_distances(const ag::Var& video, const ag::Var& audio);

double eye_aspect_ratio(const EyeLandmarkSet& eye);
/// landmarks [B,24] -> mean of both eyes' EAR, [B].
ag::Var eye_aspect_ratio(const ag::Var& landmarks);
ag::Tensor landmarks_to_tensor(const std::vector<FaceLandmarks>& faces);

double blink_loss(double ear_real, double ear_generated);
ag::Var blink_loss(const ag::Var& ear_real, const ag::Var& ear_generated);

struct Stage1LossWeights {
  double feature_matching = 10.0;
  double perceptual = 10.0;
  double contrastive = 1.0;
  double blink = 10.0;
  double margin = 1.0;
  double reconstruction = 1.0;

  void validate() const;
};

enum class LossTerm { kAdversarial, kFeatureMatching, kPerceptual, kReconstruction, kContrastive, kTemporal, kBlink };

inline const std::vector<LossTerm>& all_loss_terms() {
  static const std::vector<LossTerm> terms{LossTerm::kAdversarial, LossTerm::kFeatureMatching,
                                           LossTerm::kPerceptual,  LossTerm::kReconstruction,
                                           LossTerm::kContrastive, LossTerm::kTemporal,
                                           LossTerm::kBlink};
  return terms;
}

std::string loss_name(LossTerm term);
std::set<LossTerm> active_losses(int phase);
double loss_weight(LossTerm term, const Stage1LossWeights& weights);

using LossBundle = std::map<LossTerm, ag::Var>;

/// Weighted sum of the losses active in `phase`; everything else is ignored.
ag::Var stage1_objective(const LossBundle& bundle, const Stage1LossWeights& weights, int phase);

}  // namespace au2av::stage1
