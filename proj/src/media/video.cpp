#include "au2av/media/video.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "au2av/error.hpp"

namespace au2av::media {

void TalkingClip::validate() const {
  if (!(fps > 0.0)) throw ValidationError("clip fps must be positive");
  if (frames.empty()) throw ValidationError("clip has no frames");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!frames[i].same_shape(frames[0]))
      throw ValidationError("frame " + std::to_string(i) + " is " + std::to_string(frames[i].height) + "x" +
                            std::to_string(frames[i].width) + ", expected " + std::to_string(frames[0].height) + "x" +
                            std::to_string(frames[0].width));
    for (double v : frames[i].pixels)
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw ValidationError("frame " + std::to_string(i) + " has pixels outside [0, 1]");
  }
  if (audio) audio->validate();
}

ClipManifest ClipManifest::read(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open manifest " + file.string());
  ClipManifest m;
  bool have_count = false;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("malformed manifest line '" + line + "' in " + file.string());
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    try {
      if (key == "fps") {
        m.fps = std::stod(value);
      } else if (key == "frame_count") {
        m.frame_count = std::stoi(value);
        have_count = true;
      } else if (key == "audio_path") {
        m.audio_path = value;
      } else {
        m.extra[key] = value;
      }
    } catch (const std::logic_error&) {
      throw ValidationError("bad value for '" + key + "' in " + file.string());
    }
  }
  if (!have_count) throw ValidationError("manifest lacks frame_count: " + file.string());
  if (!(m.fps > 0.0)) throw ValidationError("manifest fps must be positive: " + file.string());
  return m;
}

void ClipManifest::write(const std::filesystem::path& file) const {
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw IoError("cannot write manifest " + file.string());
  char fps_text[32];
  std::snprintf(fps_text, sizeof fps_text, "%.17g", fps);
  os << "fps=" << fps_text << '\n' << "frame_count=" << frame_count << '\n';
  if (!audio_path.empty()) os << "audio_path=" << audio_path << '\n';
  for (const auto& [k, v] : extra) os << k << '=' << v << '\n';
}

std::string frame_file_name(int i) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%06d.png", i + 1);
  return name;
}

TalkingClip load_video(const std::filesystem::path& dir, double fps) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a frame directory: " + dir.string());
  TalkingClip clip;
  clip.fps = fps;
  std::vector<std::filesystem::path> files;
  const auto manifest_path = dir / kManifestName;
  if (std::filesystem::exists(manifest_path)) {
    const ClipManifest m = ClipManifest::read(manifest_path);
    clip.fps = m.fps;
    for (int i = 0; i < m.frame_count; ++i) files.push_back(dir / frame_file_name(i));
    if (!m.audio_path.empty()) clip.audio = load_audio(dir / m.audio_path);
  } else {
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw ValidationError("no frames in " + dir.string());
  for (const auto& f : files) clip.frames.push_back(read_png(f));
  clip.validate();
  return clip;
}

void write_clip(const std::filesystem::path& dir, const TalkingClip& clip,
                const std::map<std::string, std::string>& extra) {
  clip.validate();
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < clip.frames.size(); ++i) write_png(dir / frame_file_name(static_cast<int>(i)), clip.frames[i]);
  ClipManifest m;
  m.fps = clip.fps;
  m.frame_count = static_cast<int>(clip.frames.size());
  if (clip.audio) {
    write_wav(dir / "audio.wav", *clip.audio);
    m.audio_path = "audio.wav";
  }
  m.extra = extra;
  m.write(dir / kManifestName);
}

}  // namespace au2av::media
