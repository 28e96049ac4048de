#include "au2av/stage1/dataset.hpp"

#include <algorithm>

#include "au2av/error.hpp"
#include "au2av/media/face.hpp"
#include "au2av/media/framing.hpp"
#include "au2av/media/streams.hpp"
#include "au2av/stage1/losses.hpp"

namespace au2av::stage1 {

namespace {

ag::Tensor rows(const ag::Tensor& t, int start, int count) {
  ag::Shape s = t.shape();
  const std::size_t per = t.numel() / s[0];
  s[0] = count;
  const auto& src = t.storage();
  return ag::Tensor(s, std::vector<double>(src.begin() + start * per, src.begin() + (start + count) * per));
}

ag::Tensor stack(const std::vector<ag::Tensor>& parts) {
  ag::Shape s = parts.at(0).shape();
  std::vector<double> v;
  for (const auto& p : parts) v.insert(v.end(), p.storage().begin(), p.storage().end());
  s.insert(s.begin(), static_cast<int>(parts.size()));
  return ag::Tensor(s, std::move(v));
}

media::Image fit(const media::Image& img, int resolution) {
  if (img.height == resolution && img.width == resolution) return img;
  return media::resize_area(img, resolution, resolution);
}

}  // namespace

Stage1Sample Stage1Clip::sample(int start, int count) const {
  if (start < 0 || count < 1 || start + count > frame_count())
    throw ValidationError("sample window [" + std::to_string(start) + ", " + std::to_string(start + count) +
                          ") outside clip " + name);
  Stage1Sample s;
  std::vector<ag::Tensor> ids(count, identity.reshaped({3, identity.dim(2), identity.dim(3)}));
  s.identity = stack(ids);
  s.frames = rows(frames, start, count);
  s.mfcc = rows(mfcc, start, count);
  s.sync_mfcc = rows(mfcc, start + count / 2, 1);
  if (landmarks) s.landmarks = rows(*landmarks, start, count);
  return s;
}

ag::Tensor identity_tensor(const media::Image& image, int resolution) {
  return media::image_to_tensor(fit(image, resolution), true);
}

Stage1Clip make_stage1_clip(const std::string& name, const media::TalkingClip& clip, int resolution,
                            const std::optional<std::vector<FaceLandmarks>>& landmarks,
                            const std::optional<media::Image>& identity) {
  clip.validate();
  if (!clip.audio) throw ValidationError("clip " + name + " has no audio");
  const media::AudioWindowSequence windows = media::frame_audio_windows(*clip.audio, clip.fps);
  const int n = std::min<int>(static_cast<int>(clip.frames.size()), static_cast<int>(windows.windows.size()));
  if (n < 1) throw ValidationError("clip " + name + " has no aligned frames");

  Stage1Clip out;
  out.name = name;
  out.identity = identity_tensor(identity ? *identity : clip.frames[0], resolution);
  std::vector<media::Image> frames;
  std::vector<ag::Tensor> mf;
  for (int i = 0; i < n; ++i) {
    frames.push_back(fit(clip.frames[i], resolution));
    mf.push_back(windows.windows[i].coefficients);
  }
  out.frames = media::images_to_tensor(frames, true);
  out.mfcc = stack(mf);
  if (landmarks) {
    if (static_cast<int>(landmarks->size()) < n) throw ValidationError("clip " + name + ": fewer landmark rows than frames");
    const double sx = static_cast<double>(resolution) / clip.width();
    const double sy = static_cast<double>(resolution) / clip.height();
    std::vector<FaceLandmarks> scaled(landmarks->begin(), landmarks->begin() + n);
    for (auto& f : scaled)
      for (auto* eye : {&f.left, &f.right})
        for (auto& p : eye->p) p = {p.x * sx, p.y * sy};
    out.landmarks = landmarks_to_tensor(scaled);
  }
  return out;
}

Stage1Clip load_stage1_clip(const std::filesystem::path& dir, int resolution) {
  const media::TalkingClip clip = media::load_video(dir);
  std::optional<media::Image> identity;
  std::optional<std::vector<FaceLandmarks>> landmarks;
  const auto manifest_file = dir / media::kManifestName;
  if (std::filesystem::exists(manifest_file)) {
    const media::ClipManifest m = media::ClipManifest::read(manifest_file);
    if (auto it = m.extra.find("identity_path"); it != m.extra.end())
      identity = media::read_png(dir / it->second);
    else if (auto p = m.extra.find("pose_path"); p != m.extra.end())
      identity = media::select_aligned_identity_frame(clip, TablePoseProvider::from_file(dir / p->second));
    if (auto it = m.extra.find("landmarks_path"); it != m.extra.end())
      landmarks = TableLandmarkProvider::from_file(dir / it->second).table();
  }
  return make_stage1_clip(dir.filename().string(), clip, resolution, landmarks, identity);
}

std::vector<Stage1Clip> load_stage1_dataset(const std::filesystem::path& root, int resolution) {
  std::vector<Stage1Clip> out;
  for (const auto& dir : media::list_clip_dirs(root)) out.push_back(load_stage1_clip(dir, resolution));
  if (out.empty()) throw ValidationError("no clips under " + root.string());
  return out;
}

ag::Tensor silence_mfcc() {
  const std::vector<double> zeros(3200, 0.0);
  return media::compute_mfcc(zeros, media::kCanonicalSampleRate);
}

}  // namespace au2av::stage1
