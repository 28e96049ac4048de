#pragma once

// Injection points for the third-party models the pipeline depends on
// (head-pose estimator, facial landmark detector, perceptual feature
// network, identity/inception embedding, lip reader), each with a small
// default that is deterministic and needs no external weights.

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "au2av/autograd/nn.hpp"
#include "au2av/media/image.hpp"

namespace au2av {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Six eye contour points p1..p6 (p1/p4 corners, p2/p3 upper lid, p5/p6
/// lower lid).
struct EyeLandmarkSet {
  std::array<Point2, 6> p;
};

struct FaceLandmarks {
  EyeLandmarkSet left;
  EyeLandmarkSet right;
};

struct PoseAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

class PoseProvider {
 public:
  virtual ~PoseProvider() = default;
  virtual std::string name() const = 0;
  /// Angles in degrees, or nullopt when the estimator fails on the frame.
  virtual std::optional<PoseAngles> pose(const media::Image& frame, int frame_index) const = 0;
};

class LandmarkProvider {
 public:
  virtual ~LandmarkProvider() = default;
  virtual std::string name() const = 0;
  virtual std::optional<FaceLandmarks> landmarks(const media::Image& frame, int frame_index) const = 0;
};

/// Differentiable per-layer features of an NCHW batch in [-1, 1].
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::string name() const = 0;
  virtual std::vector<ag::Var> features(const ag::Var& images) const = 0;
};

/// Image to fixed-dimension vector (inception / identity embedding analog).
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual int dimension() const = 0;
  virtual std::optional<std::vector<double>> embed(const media::Image& image) const = 0;
};

class LipReader {
 public:
  virtual ~LipReader() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> read(const std::vector<media::Image>& frames) const = 0;
};

/// Per-frame table, one `yaw pitch roll` line per frame; `nan` marks a
/// failed estimate.
class TablePoseProvider final : public PoseProvider {
 public:
  explicit TablePoseProvider(std::vector<std::optional<PoseAngles>> table) : table_(std::move(table)) {}
  static TablePoseProvider from_file(const std::filesystem::path& file);
  std::string name() const override { return "table-pose"; }
  std::optional<PoseAngles> pose(const media::Image&, int frame_index) const override;
  static void write_file(const std::filesystem::path& file, const std::vector<PoseAngles>& poses);

 private:
  std::vector<std::optional<PoseAngles>> table_;
};

/// Per-frame table, 24 numbers per line (left p1..p6 then right p1..p6, x y).
class TableLandmarkProvider final : public LandmarkProvider {
 public:
  explicit TableLandmarkProvider(std::vector<FaceLandmarks> table) : table_(std::move(table)) {}
  static TableLandmarkProvider from_file(const std::filesystem::path& file);
  static void write_file(const std::filesystem::path& file, const std::vector<FaceLandmarks>& table);
  std::string name() const override { return "table-landmarks"; }
  std::optional<FaceLandmarks> landmarks(const media::Image&, int frame_index) const override;
  const std::vector<FaceLandmarks>& table() const noexcept { return table_; }

 private:
  std::vector<FaceLandmarks> table_;
};

/// Frozen, randomly initialised three-layer conv net (fixed seed); each
/// layer's activation is one feature level.
class RandomConvFeatureProvider final : public FeatureProvider {
 public:
  explicit RandomConvFeatureProvider(unsigned seed = 19, int width = 8);
  std::string name() const override { return "random-conv3"; }
  std::vector<ag::Var> features(const ag::Var& images) const override;

 private:
  std::vector<ag::Conv2d> layers_;
  ag::ParamStore params_;
};

/// Single feature level equal to the input itself.
class IdentityFeatureProvider final : public FeatureProvider {
 public:
  std::string name() const override { return "identity"; }
  std::vector<ag::Var> features(const ag::Var& images) const override { return {images}; }
};

/// Global-average-pooled activations of the frozen random conv net,
/// concatenated across layers.
class ConvEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit ConvEmbeddingProvider(unsigned seed = 23, int width = 8);
  std::string name() const override { return "random-conv-gap"; }
  int dimension() const override;
  std::optional<std::vector<double>> embed(const media::Image& image) const override;

 private:
  RandomConvFeatureProvider net_;
  int width_;
};

/// Returns a fixed transcript regardless of the frames.
class ScriptedLipReader final : public LipReader {
 public:
  explicit ScriptedLipReader(std::vector<std::string> words) : words_(std::move(words)) {}
  std::string name() const override { return "scripted"; }
  std::vector<std::string> read(const std::vector<media::Image>&) const override { return words_; }

 private:
  std::vector<std::string> words_;
};

std::vector<std::string> split_words(const std::string& text);

}  // namespace au2av
