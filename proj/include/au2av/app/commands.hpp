#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "au2av/app/config.hpp"
#include "au2av/eval/metrics.hpp"

namespace au2av::app {

struct PrepareSummary {
  std::vector<std::string> prepared;
  std::vector<std::string> skipped;  // "name: reason"
};

/// Every clip directory under `raw_dir` is validated, its audio resampled to
/// 16 kHz and its identity frame chosen (pose sidecar when configured,
/// else frame 0), then written to out_dir/<name>/ with a manifest.
/// out_dir/dataset.txt lists the prepared clips. Failing clips are logged
/// and skipped; throws when none survive.
PrepareSummary cmd_prepare(const std::filesystem::path& raw_dir, const std::filesystem::path& out_dir,
                           const PipelineConfig& config);

/// Trains on paths.out/prepared/human; output under paths.out/stage1.
stage1::TrainSummary cmd_train_stage1(const PipelineConfig& config, bool resume);

/// Trains on both prepared streams; output under paths.out/stage2.
stage2::Stage2Summary cmd_train_stage2(const PipelineConfig& config, bool resume);

struct GenerateOptions {
  std::filesystem::path audio;
  std::filesystem::path image;
  std::filesystem::path stage1_checkpoint;
  std::optional<std::filesystem::path> stage2_checkpoint;
  std::filesystem::path out;
  bool skip_adapt = false;
  std::optional<int> adapt_epochs;  // else the config value
  bool human_only = false;
  bool keep_intermediate = false;
};

struct GenerateResult {
  media::TalkingClip human;
  std::optional<media::TalkingClip> animated;
  std::vector<double> adapt_losses;
  std::filesystem::path output_dir;  // the clip that was written last
};

/// One frame per audio window from the (adapted) stage-1 generator, then
/// per-frame translation by the stage-2 generator. Writes out/animated/
/// (and out/human/ with --human-only or --keep-intermediate), each with
/// frames, audio.wav and a manifest.
GenerateResult cmd_generate(const PipelineConfig& config, const GenerateOptions& options);

/// Clip directories are matched by name (a directory holding frames itself
/// counts as one clip). Writes out/report.json plus one report per clip
/// under out/clips/, and returns the averaged report.
eval::MetricReport cmd_evaluate(const std::filesystem::path& generated, const std::filesystem::path& reference,
                                const std::filesystem::path& out, const PipelineConfig& config);

/// Procedural human and animated clip sets under paths.human / paths.target.
void cmd_toy_data(const PipelineConfig& config, int clips, int frames, int size);

/// Writes a tiny sine-burst WAV and one rendered face: fixtures for generate.
void write_toy_generation_inputs(const std::filesystem::path& audio, const std::filesystem::path& image,
                                 double seconds, int size, unsigned seed);

}  // namespace au2av::app
