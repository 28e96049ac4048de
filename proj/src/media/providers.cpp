#include "au2av/providers.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "au2av/error.hpp"

namespace au2av {

TablePoseProvider TablePoseProvider::from_file(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open pose table " + file.string());
  std::vector<std::optional<PoseAngles>> table;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!(ls >> a >> b >> c)) throw ValidationError("malformed pose line '" + line + "' in " + file.string());
    const PoseAngles p{std::stod(a), std::stod(b), std::stod(c)};
    if (std::isfinite(p.yaw) && std::isfinite(p.pitch) && std::isfinite(p.roll))
      table.emplace_back(p);
    else
      table.emplace_back(std::nullopt);
  }
  return TablePoseProvider(std::move(table));
}

void TablePoseProvider::write_file(const std::filesystem::path& file, const std::vector<PoseAngles>& poses) {
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw IoError("cannot write pose table " + file.string());
  os << std::setprecision(17);
  for (const auto& p : poses) os << p.yaw << ' ' << p.pitch << ' ' << p.roll << '\n';
}

std::optional<PoseAngles> TablePoseProvider::pose(const media::Image&, int frame_index) const {
  if (frame_index < 0 || frame_index >= static_cast<int>(table_.size())) return std::nullopt;
  return table_[frame_index];
}

TableLandmarkProvider TableLandmarkProvider::from_file(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open landmark table " + file.string());
  std::vector<FaceLandmarks> table;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    FaceLandmarks f;
    for (auto* eye : {&f.left, &f.right})
      for (auto& pt : eye->p)
        if (!(ls >> pt.x >> pt.y)) throw ValidationError("landmark line needs 24 numbers in " + file.string());
    table.push_back(f);
  }
  return TableLandmarkProvider(std::move(table));
}

void TableLandmarkProvider::write_file(const std::filesystem::path& file, const std::vector<FaceLandmarks>& table) {
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw IoError("cannot write landmark table " + file.string());
  os << std::setprecision(17);
  for (const auto& f : table) {
    bool first = true;
    for (const auto* eye : {&f.left, &f.right})
      for (const auto& pt : eye->p) {
        os << (first ? "" : " ") << pt.x << ' ' << pt.y;
        first = false;
      }
    os << '\n';
  }
}

std::optional<FaceLandmarks> TableLandmarkProvider::landmarks(const media::Image&, int frame_index) const {
  if (frame_index < 0 || frame_index >= static_cast<int>(table_.size())) return std::nullopt;
  return table_[frame_index];
}

RandomConvFeatureProvider::RandomConvFeatureProvider(unsigned seed, int width) {
  ag::Rng rng(seed);
  layers_ = {{"feat.0", 3, width, 3, 2, 1}, {"feat.1", width, 2 * width, 3, 2, 1}, {"feat.2", 2 * width, 2 * width, 3, 1, 1}};
  for (const auto& l : layers_) l.init(params_, rng);
  params_.set_trainable(false);
}

std::vector<ag::Var> RandomConvFeatureProvider::features(const ag::Var& images) const {
  std::vector<ag::Var> out;
  ag::Var h = images;
  for (const auto& l : layers_) {
    h = ag::leaky_relu(l(params_, h), 0.2);
    out.push_back(h);
  }
  return out;
}

ConvEmbeddingProvider::ConvEmbeddingProvider(unsigned seed, int width) : net_(seed, width), width_(width) {}

int ConvEmbeddingProvider::dimension() const { return 5 * width_; }

std::optional<std::vector<double>> ConvEmbeddingProvider::embed(const media::Image& image) const {
  const ag::Var x(media::image_to_tensor(image, true));
  std::vector<double> out;
  for (const auto& f : net_.features(x)) {
    const ag::Tensor pooled = ag::mean(f, {2, 3}).value();
    out.insert(out.end(), pooled.storage().begin(), pooled.storage().end());
  }
  for (double v : out)
    if (!std::isfinite(v)) return std::nullopt;
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> words;
  for (std::string w; is >> w;) words.push_back(w);
  return words;
}

}  // namespace au2av
