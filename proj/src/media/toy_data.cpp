#include "au2av/media/toy_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "au2av/error.hpp"

namespace au2av::toy {
namespace {

struct Rgb {
  double r, g, b;
};

// Soft ellipse coverage in [0,1] with a one-pixel ramp.
double ellipse_cover(double x, double y, double cx, double cy, double rx, double ry) {
  if (rx <= 0.0 || ry <= 0.0) return 0.0;
  const double d = std::sqrt(((x - cx) / rx) * ((x - cx) / rx) + ((y - cy) / ry) * ((y - cy) / ry));
  const double edge = (1.0 - d) * std::min(rx, ry);
  return std::clamp(edge + 0.5, 0.0, 1.0);
}

void blend(media::Image& img, int y, int x, const Rgb& c, double a) {
  if (a <= 0.0) return;
  img.at(y, x, 0) = img.at(y, x, 0) * (1 - a) + c.r * a;
  img.at(y, x, 1) = img.at(y, x, 1) * (1 - a) + c.g * a;
  img.at(y, x, 2) = img.at(y, x, 2) * (1 - a) + c.b * a;
}

EyeLandmarkSet eye_points(double cx, double cy, double half_w, double half_h) {
  const double h = half_h * std::sqrt(3.0) / 2.0;  // lid height at x = +-half_w / 2
  EyeLandmarkSet e;
  e.p[0] = {cx - half_w, cy};
  e.p[1] = {cx - half_w / 2, cy - h};
  e.p[2] = {cx + half_w / 2, cy - h};
  e.p[3] = {cx + half_w, cy};
  e.p[4] = {cx + half_w / 2, cy + h};
  e.p[5] = {cx - half_w / 2, cy + h};
  return e;
}

}  // namespace

RenderedFace render_face(const FaceParams& params, int size, FaceStyle style) {
  const bool anime = style == FaceStyle::kAnime;
  const double s = size / 64.0;
  const double cx = size / 2.0 + params.pose.yaw * 0.15 * s;
  const double cy = size / 2.0 + params.pose.pitch * 0.15 * s;
  const double tone = std::clamp(params.skin_tone, -1.0, 1.0);

  const Rgb skin = anime ? Rgb{1.0, 0.88 + 0.03 * tone, 0.80} : Rgb{0.80 + 0.1 * tone, 0.62 + 0.08 * tone, 0.50 + 0.05 * tone};
  const Rgb hair = anime ? Rgb{0.35, 0.45, 0.85} : Rgb{0.25, 0.17, 0.10};
  const Rgb lip = anime ? Rgb{0.85, 0.35, 0.40} : Rgb{0.55, 0.20, 0.22};
  const Rgb eye_white{0.97, 0.97, 0.97};
  const Rgb iris = anime ? Rgb{0.10, 0.25, 0.60} : Rgb{0.20, 0.13, 0.08};

  const double face_rx = 22.0 * s, face_ry = 27.0 * s;
  const double eye_dx = 9.0 * s, eye_y = cy - 5.0 * s;
  const double eye_half_w = (anime ? 6.5 : 5.0) * s;
  const double eye_half_h = std::max(0.05, params.eye_open) * (anime ? 0.45 : 0.2) * eye_half_w;
  const double mouth_y = cy + 12.0 * s;
  const double mouth_rx = (anime ? 4.0 : 6.0) * s;
  const double mouth_ry = (0.8 + 4.5 * std::clamp(params.mouth_open, 0.0, 1.0)) * s;
  const double roll = params.pose.roll * std::numbers::pi / 180.0;

  RenderedFace out{media::Image(size, size), {}};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double gy = static_cast<double>(y) / size;
      const Rgb bg = anime ? Rgb{0.95, 0.85, 0.92} : Rgb{0.35 + 0.2 * gy, 0.42 + 0.2 * gy, 0.55 + 0.1 * gy};
      out.image.at(y, x, 0) = bg.r;
      out.image.at(y, x, 1) = bg.g;
      out.image.at(y, x, 2) = bg.b;
      // rotate sample point about the face centre for roll
      const double px = cx + (x + 0.5 - cx) * std::cos(roll) + (y + 0.5 - cy) * std::sin(roll);
      const double py = cy - (x + 0.5 - cx) * std::sin(roll) + (y + 0.5 - cy) * std::cos(roll);
      blend(out.image, y, x, hair, ellipse_cover(px, py, cx, cy - 6.0 * s, face_rx + 3.0 * s, face_ry));
      if (anime) blend(out.image, y, x, Rgb{0.2, 0.2, 0.3}, ellipse_cover(px, py, cx, cy + 2.0 * s, face_rx + 1.0 * s, face_ry - 3.0 * s));
      blend(out.image, y, x, skin, ellipse_cover(px, py, cx, cy + 2.0 * s, face_rx, face_ry - 4.0 * s));
      for (double side : {-1.0, 1.0}) {
        const double ex = cx + side * eye_dx;
        blend(out.image, y, x, eye_white, ellipse_cover(px, py, ex, eye_y, eye_half_w, eye_half_h));
        const double iris_r = std::min(eye_half_w * (anime ? 0.6 : 0.45), eye_half_h);
        blend(out.image, y, x, iris, ellipse_cover(px, py, ex, eye_y, iris_r, std::min(iris_r, eye_half_h)));
        if (anime) blend(out.image, y, x, eye_white, ellipse_cover(px, py, ex + 1.2 * s, eye_y - 1.2 * s, 0.9 * s, 0.9 * s) * (params.eye_open > 0.3));
      }
      blend(out.image, y, x, lip, ellipse_cover(px, py, cx, mouth_y, mouth_rx, mouth_ry));
      blend(out.image, y, x, Rgb{0.15, 0.05, 0.05},
            ellipse_cover(px, py, cx, mouth_y, mouth_rx * 0.7, std::max(0.0, mouth_ry - 1.2 * s)));
    }

  auto rotate = [&](EyeLandmarkSet e) {
    for (auto& p : e.p) {
      const double dx = p.x - cx, dy = p.y - cy;
      p = {cx + dx * std::cos(roll) - dy * std::sin(roll), cy + dx * std::sin(roll) + dy * std::cos(roll)};
    }
    return e;
  };
  out.landmarks.left = rotate(eye_points(cx - eye_dx, eye_y, eye_half_w, eye_half_h));
  out.landmarks.right = rotate(eye_points(cx + eye_dx, eye_y, eye_half_w, eye_half_h));
  return out;
}

ToyClip make_toy_clip(const ToyClipOptions& o) {
  if (o.frames < 1 || o.size < 8 || !(o.fps > 0.0)) throw ValidationError("invalid toy clip options");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double syllable_rate = 3.0 + 2.0 * u(rng);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  const double f0 = 110.0 + 60.0 * u(rng);
  const double pose_phase = 2.0 * std::numbers::pi * u(rng);
  const double tone = 2.0 * u(rng) - 1.0;

  auto envelope = [&](double t) {
    const double v = std::sin(2.0 * std::numbers::pi * syllable_rate * t + phase);
    return v > 0.0 ? v * v : 0.0;
  };

  ToyClip toy;
  toy.clip.fps = o.fps;
  const int rate = media::kCanonicalSampleRate;
  if (o.with_audio) {
    const auto n = static_cast<std::size_t>(std::lround(o.frames / o.fps * rate));
    media::AudioClip audio;
    audio.sample_rate = rate;
    audio.samples.resize(n);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate;
      double voiced = 0.0;
      for (int h = 1; h <= 4; ++h) voiced += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
      audio.samples[i] = std::clamp(0.35 * envelope(t) * voiced + noise(rng), -1.0, 1.0);
    }
    toy.clip.audio = std::move(audio);
  }

  for (int f = 0; f < o.frames; ++f) {
    const double t = f / o.fps;
    FaceParams p;
    p.mouth_open = envelope(t);
    p.eye_open = 1.0;
    for (int b : o.blink_frames)
      if (f >= b && f < b + 3) p.eye_open = 0.1;
    p.pose = {8.0 * std::sin(2.0 * std::numbers::pi * 0.3 * t + pose_phase),
              4.0 * std::sin(2.0 * std::numbers::pi * 0.2 * t + 2 * pose_phase),
              2.0 * std::sin(2.0 * std::numbers::pi * 0.25 * t + 3 * pose_phase)};
    p.skin_tone = tone;
    RenderedFace r = render_face(p, o.size, o.style);
    toy.clip.frames.push_back(std::move(r.image));
    toy.landmarks.push_back(r.landmarks);
    toy.poses.push_back(p.pose);
    toy.mouth_open.push_back(p.mouth_open);
  }
  return toy;
}

void write_toy_clip(const std::filesystem::path& dir, const ToyClip& toy, const std::string& transcript) {
  std::map<std::string, std::string> extra{{"landmarks_path", "landmarks.txt"}, {"pose_path", "pose.txt"}};
  if (!transcript.empty()) extra["transcript"] = transcript;
  media::write_clip(dir, toy.clip, extra);
  TableLandmarkProvider::write_file(dir / "landmarks.txt", toy.landmarks);
  TablePoseProvider::write_file(dir / "pose.txt", toy.poses);
}

void write_toy_dataset(const std::filesystem::path& dir, int count, ToyClipOptions options) {
  const unsigned base = options.seed;
  for (int i = 0; i < count; ++i) {
    options.seed = base + 101u * static_cast<unsigned>(i);
    options.blink_frames = {options.frames / 3};
    char name[32];
    std::snprintf(name, sizeof name, "clip_%03d", i);
    write_toy_clip(dir / name, make_toy_clip(options), "bin blue at e seven please");
  }
}

}  // namespace au2av::toy
