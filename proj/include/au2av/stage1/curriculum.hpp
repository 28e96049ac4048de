#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "au2av/stage1/losses.hpp"

namespace au2av::stage1 {

struct OptimizerSettings {
  double learning_rate = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.9;
  int constant_epochs = 50;
  int decay_epochs = 100;

  void validate() const;
};

/// Constant for `constant_epochs`, then linear decay to 0 over `decay_epochs`.
double lr_schedule(int epoch, const OptimizerSettings& settings);

struct StabilizationSettings {
  double relative_epsilon = 0.01;  // epsilon = this * |rolling mean|
  int patience = 5;
};

/// Mean first difference over the last `patience` epochs, i.e.
/// (h[n-1] - h[n-1-p]) / p with p = min(patience, n - 1).
double moving_average_slope(const std::vector<double>& history, int patience);

/// True iff |moving_average_slope| < epsilon. Histories shorter than
/// `patience` (or than 2) are never stable.
bool stabilization_check(const std::vector<double>& history, double epsilon, int patience);

/// Mean of the last `patience` entries.
double rolling_mean(const std::vector<double>& history, int patience);

/// Curriculum over three phases: {GAN, FM, PL}, + {RL, CL, TAL}, + {BL}.
struct CurriculumState {
  int phase = 1;
  int epoch = 0;
  std::map<std::string, std::vector<double>> loss_history;  // active losses, current phase only
  std::vector<int> phase_by_epoch;                          // phase in force during each finished epoch

  std::set<LossTerm> active() const { return active_losses(phase); }

  /// True when every active loss has stabilized under `settings`.
  bool stabilized(const StabilizationSettings& settings) const;

  /// Appends one epoch of mean losses (active terms only) and advances the
  /// phase when the rule fires. Histories restart after an advance.
  /// Returns true when the phase changed. With `allow_advance` false the
  /// phase stays pinned (manual override).
  bool record_epoch(const std::map<LossTerm, double>& epoch_means, const StabilizationSettings& settings,
                    bool allow_advance = true);

  /// Manual override; phases never go backwards.
  void advance_to(int new_phase);

  std::string serialize() const;
  static CurriculumState parse(const std::string& text);
};

}  // namespace au2av::stage1
