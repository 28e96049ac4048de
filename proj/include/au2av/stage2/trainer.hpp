#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "au2av/media/image.hpp"
#include "au2av/media/video.hpp"
#include "au2av/stage2/losses.hpp"

namespace au2av::stage2 {

/// One domain clip at the stage-2 resolution.
struct DomainClip {
  std::string name;
  ag::Tensor frames;                    // [T,3,R,R] in [-1,1]
  std::optional<ag::Tensor> landmarks;  // [T,24] pixels at R

  int frame_count() const { return frames.dim(0); }
};

/// A contiguous window of t+1 frames from one domain.
struct DomainWindow {
  ag::Tensor frames;                    // [t+1,3,R,R]
  std::optional<ag::Tensor> landmarks;  // [t+1,24]
};

DomainWindow window(const DomainClip& clip, int start, int count);

DomainClip make_domain_clip(const std::string& name, const media::TalkingClip& clip, int resolution,
                            const std::optional<std::vector<FaceLandmarks>>& landmarks = std::nullopt);

struct DomainData {
  std::vector<DomainClip> source;
  std::vector<DomainClip> target;
};

/// Both streams, reading landmark sidecars when the manifest names one.
/// Clips too short for a t+1 window are dropped.
DomainData load_domain_data(const std::filesystem::path& source_dir, const std::filesystem::path& target_dir,
                            int resolution, int past);

struct Stage2TrainSettings {
  Stage2Config arch;
  Stage2LossWeights weights;
  ag::AdamSettings adam{0.0001, 0.5, 0.999, 1e-8};
  int epochs = 3;
  unsigned seed = 1;
  int steps_per_epoch = 0;        // 0 = as many windows as the larger stream holds
  bool literal_identity = false;  // identity term on source frames through G_s2t only

  void validate() const;
};

struct Stage2StepReport {
  std::map<Stage2Term, double> generator;  // unweighted; kPredictor holds the predictor loss
  double discriminator = 0.0;
  double landmark = 0.0;
};

class Stage2Trainer {
 public:
  explicit Stage2Trainer(const Stage2TrainSettings& settings);

  Stage2Model& model() { return model_; }
  const Stage2Model& model() const { return model_; }
  const Stage2TrainSettings& settings() const { return settings_; }
  int epoch() const { return epoch_; }
  void set_epoch(int e) { epoch_ = e; }

  /// Discriminators, then predictors, then generators. Throws NumericError
  /// naming a non-finite loss.
  Stage2StepReport train_step(const DomainWindow& source, const DomainWindow& target);

  long generator_updates() const { return g_updates_; }
  void save_checkpoint(const std::filesystem::path& dir) const;
  void load_checkpoint(const std::filesystem::path& dir);

 private:
  Stage2TrainSettings settings_;
  Stage2Model model_;
  std::vector<ag::Adam> opts_;  // parallel to model_.stores()
  int epoch_ = 0;
  long g_updates_ = 0;
};

struct Stage2Summary {
  std::vector<std::filesystem::path> checkpoints;
};

/// Checkpoints in out/checkpoints/epoch_NNNN/, losses in out/loss_log.csv.
Stage2Summary train_stage2(const DomainData& data, const Stage2TrainSettings& settings,
                           const std::filesystem::path& out, bool resume = false);

std::optional<std::filesystem::path> latest_stage2_checkpoint(const std::filesystem::path& out);

/// Networks only.
Stage2Model load_stage2_model(const std::filesystem::path& checkpoint_dir, const Stage2Config& expected);

/// Source-domain images to the target domain, one frame at a time.
std::vector<media::Image> translate_to_target(const Stage2Model& model, const std::vector<media::Image>& frames);

}  // namespace au2av::stage2
