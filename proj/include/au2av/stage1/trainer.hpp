#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "au2av/autograd/archive.hpp"
#include "au2av/stage1/curriculum.hpp"
#include "au2av/stage1/dataset.hpp"
#include "au2av/stage1/networks.hpp"

namespace au2av::stage1 {

struct Stage1TrainSettings {
  Stage1Config arch;
  Stage1LossWeights weights;
  OptimizerSettings optimizer;
  StabilizationSettings stabilization;
  int epochs = 3;
  unsigned seed = 1;
  int phase_override = 0;        // 1..3 pins the phase; 0 follows the curriculum
  int window_stride = 5;         // frames between consecutive training windows
  int steps_per_epoch = 0;       // 0 = every window once
  int sync_pretrain_steps = 20;  // contrastive steps on real pairs before freezing
  bool sync_adversarial = false; // keep updating the sync discriminator during training

  void validate() const;
};

struct StepReport {
  std::map<LossTerm, double> generator;  // unweighted, active terms only
  double discriminator = 0.0;
  double landmark = 0.0;                 // landmark head regression loss (0 when no landmarks)
  double lower_l1 = 0.0;                 // lower-half L1 of the pre-update output
};

/// Networks, one Adam per network, and the curriculum.
class Stage1Trainer {
 public:
  Stage1Trainer(const Stage1TrainSettings& settings, std::shared_ptr<const FeatureProvider> features);

  Stage1Model& model() { return model_; }
  const Stage1Model& model() const { return model_; }
  CurriculumState& curriculum() { return curriculum_; }
  const Stage1TrainSettings& settings() const { return settings_; }

  /// One discriminator update, then one generator update, on the
  /// phase-active losses. Throws NumericError naming a non-finite loss.
  StepReport train_step(const Stage1Sample& batch);

  /// Contrastive update of the sync discriminator on a genuine pair
  /// (`genuine`'s frames and audio) and a false pair (its frames with
  /// `other`'s audio). Returns the loss.
  double pretrain_sync_step(const Stage1Sample& genuine, const Stage1Sample& other);
  void freeze_sync();

  void set_learning_rate(double lr);
  long discriminator_updates() const { return d_updates_; }
  long generator_updates() const { return g_updates_; }

  /// Writes every network, optimizer state and state.txt into `dir`
  /// atomically (temp dir + rename).
  void save_checkpoint(const std::filesystem::path& dir) const;
  void load_checkpoint(const std::filesystem::path& dir);

 private:
  Stage1TrainSettings settings_;
  std::shared_ptr<const FeatureProvider> features_;
  Stage1Model model_;
  ag::Adam g_opt_, fd_opt_, td_opt_, sd_opt_, lm_opt_;
  CurriculumState curriculum_;
  bool sync_frozen_ = false;
  long d_updates_ = 0;
  long g_updates_ = 0;
};

struct TrainSummary {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<int> phases;  // phase in force during each epoch run
};

/// Full curriculum training. Checkpoints land in
/// out/checkpoints/epoch_NNNN/, losses in out/loss_log.csv
/// (epoch,phase,loss_name,value). `resume` continues from the newest
/// checkpoint under `out`.
TrainSummary train_stage1(const std::vector<Stage1Clip>& clips, const Stage1TrainSettings& settings,
                          std::shared_ptr<const FeatureProvider> features, const std::filesystem::path& out,
                          bool resume = false);

/// Newest epoch_NNNN directory under out/checkpoints, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& out);

/// Loads only the networks of a checkpoint (no optimizer state).
Stage1Model load_stage1_model(const std::filesystem::path& checkpoint_dir, const Stage1Config& expected);

struct AdaptResult {
  Stage1Model model;
  std::vector<double> losses;  // losses[k] = perceptual loss after k passes
  int generator_passes = 0;
  int discriminator_updates = 0;
};

/// Inference-time fine-tuning of a copy of the generator so that it
/// reproduces `identity` ([1,3,R,R]) from a silent window. The source model
/// is never modified. Aborts when the loss grows tenfold.
AdaptResult one_shot_adapt(const Stage1Model& source, const ag::Tensor& identity, const FeatureProvider& features,
                           int epochs = 5, const OptimizerSettings& optimizer = {});

}  // namespace au2av::stage1
