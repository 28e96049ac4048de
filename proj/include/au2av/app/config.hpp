#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "au2av/providers.hpp"
#include "au2av/stage1/trainer.hpp"
#include "au2av/stage2/trainer.hpp"

namespace au2av::app {

/// Registry names of the injected models. "none" disables an optional one.
struct ProviderRegistry {
  std::string pose = "sidecar";           // sidecar | none
  std::string landmarks = "sidecar";      // sidecar | none
  std::string perceptual = "random-conv3";  // random-conv3 | identity
  std::string embedding = "random-conv-gap";  // random-conv-gap | none
  std::string lip_reader = "none";        // transcript | none

  void validate() const;
};

struct PipelinePaths {
  std::filesystem::path human;   // raw human-domain clips
  std::filesystem::path target;  // raw target-domain (animated) clips
  std::filesystem::path out = "run";

  std::filesystem::path prepared_human() const { return out / "prepared" / "human"; }
  std::filesystem::path prepared_target() const { return out / "prepared" / "target"; }
  std::filesystem::path stage1_dir() const { return out / "stage1"; }
  std::filesystem::path stage2_dir() const { return out / "stage2"; }
};

struct PipelineConfig {
  stage1::Stage1TrainSettings stage1;
  stage2::Stage2TrainSettings stage2;
  ProviderRegistry providers;
  PipelinePaths paths;
  unsigned seed = 1;
  int adapt_epochs = 5;

  /// Copies `seed` into both stages and checks every section.
  void validate();
  /// Canonical JSON with every field (keys sorted).
  std::string to_json() const;
  /// Stable under key reordering and whitespace.
  std::string hash() const;
};

/// Parses JSON; absent keys keep their defaults, unknown keys are rejected.
/// Relative paths resolve against `base_dir`.
PipelineConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& file);

/// Small-network settings that finish a few epochs of both stages in
/// minutes on one CPU core.
PipelineConfig toy_config();

std::shared_ptr<const FeatureProvider> make_feature_provider(const ProviderRegistry& r);
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ProviderRegistry& r);

}  // namespace au2av::app
