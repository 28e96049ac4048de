#include "au2av/media/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "au2av/error.hpp"

namespace au2av::media {
namespace {

std::uint32_t u32(const unsigned char* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24); }
std::uint16_t u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

double decode_sample(const unsigned char* p, int format, int bits) {
  if (format == 3) {
    if (bits == 32) {
      float f;
      std::memcpy(&f, p, 4);
      return f;
    }
    double d;
    std::memcpy(&d, p, 8);
    return d;
  }
  switch (bits) {
    case 8: return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16: return static_cast<std::int16_t>(u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v |= ~0xFFFFFF;
      return v / 8388608.0;
    }
    case 32: return static_cast<std::int32_t>(u32(p)) / 2147483648.0;
    default: break;
  }
  return 0.0;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

void AudioClip::validate() const {
  if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
  for (double s : samples)
    if (!std::isfinite(s)) throw ValidationError("audio contains non-finite samples");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path.string());

  int format = 0, channels = 0, rate = 0, bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t len = u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0 && len >= 16 && body + 16 <= bytes.size()) {
      format = u16(bytes.data() + body);
      channels = u16(bytes.data() + body + 2);
      rate = static_cast<int>(u32(bytes.data() + body + 4));
      bits = u16(bytes.data() + body + 14);
      if (format == 0xFFFE && len >= 26) format = u16(bytes.data() + body + 24);  // WAVE_FORMAT_EXTENSIBLE
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = std::min(len, bytes.size() - body);
    }
    pos = body + len + (len & 1);
  }
  if (!data || channels <= 0 || rate <= 0) throw IoError("WAVE file lacks fmt/data chunks: " + path.string());
  const bool pcm_ok = format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == 3 && (bits == 32 || bits == 64);
  if (!pcm_ok && !float_ok)
    throw IoError("unsupported WAVE encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                  " bits) in " + path.string());

  const std::size_t bytes_per = static_cast<std::size_t>(bits / 8);
  const std::size_t frame = bytes_per * static_cast<std::size_t>(channels);
  const std::size_t frames = data_len / frame;
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) acc += decode_sample(data + i * frame + c * bytes_per, format, bits);
    clip.samples[i] = acc / channels;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  clip.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write audio file " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  os.write("RIFF", 4);
  put_u32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put_u32(os, 16);
  put_u16(os, 1);
  put_u16(os, 1);
  put_u32(os, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(os, static_cast<std::uint32_t>(clip.sample_rate * 2));
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, data_bytes);
  for (double s : clip.samples) {
    const long q = std::lround(std::clamp(s, -1.0, 1.0) * 32767.0);
    put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!os) throw IoError("write failed for " + path.string());
}

std::vector<double> resample(std::span<const double> samples, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw ValidationError("sample rates must be positive");
  if (from_rate == to_rate) return {samples.begin(), samples.end()};
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(samples.size()) * to_rate / static_cast<double>(from_rate)));
  std::vector<double> out(out_len);
  const double step = static_cast<double>(from_rate) / to_rate;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double src = i * step;
    const auto lo = static_cast<std::size_t>(src);
    const double frac = src - static_cast<double>(lo);
    const double a = lo < samples.size() ? samples[lo] : 0.0;
    const double b = lo + 1 < samples.size() ? samples[lo + 1] : a;
    out[i] = a + (b - a) * frac;
  }
  return out;
}

AudioClip load_audio(const std::filesystem::path& path, int target_rate) {
  AudioClip raw = read_wav(path);
  if (raw.samples.empty()) throw ValidationError("audio file has no samples: " + path.string());
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples = resample(raw.samples, raw.sample_rate, target_rate);
  out.validate();
  return out;
}

}  // namespace au2av::media
