#include "au2av/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "au2av/autograd/tensor.hpp"
#include "au2av/error.hpp"
#include "au2av/stage1/losses.hpp"

namespace au2av::eval {

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  if (!std::isfinite(m)) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / v.size());
}

// Valid-mode separable filter of an h x w plane with a 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows, const std::vector<int>& pick) {
  const int d = static_cast<int>(rows.front().size());
  Eigen::MatrixXd m(pick.size(), d);
  for (std::size_t i = 0; i < pick.size(); ++i) {
    const auto& r = rows[pick[i]];
    if (static_cast<int>(r.size()) != d) throw ValidationError("kid: feature dimensions differ");
    for (int j = 0; j < d; ++j) m(i, j) = r[j];
  }
  return m;
}

double unbiased_mmd(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const double d = static_cast<double>(x.cols());
  auto kernel = [d](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd k = (a * b.transpose()).array() / d + 1.0;
    return Eigen::MatrixXd(k.array().cube());
  };
  const Eigen::MatrixXd kxx = kernel(x, x), kyy = kernel(y, y), kxy = kernel(x, y);
  const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  const double sxx = kxx.sum() - kxx.trace();
  const double syy = kyy.sum() - kyy.trace();
  return sxx / (n * (n - 1)) + syy / (m * (m - 1)) - 2.0 * kxy.sum() / (n * m);
}

std::vector<int> iota_n(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

double psnr(const std::vector<double>& a, const std::vector<double>& b, double max_value) {
  if (a.size() != b.size() || a.empty()) throw ValidationError("psnr: inputs differ in size");
  if (!(max_value > 0.0)) throw ValidationError("psnr: max_value must be positive");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  if (se == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(max_value * max_value / (se / a.size()));
}

double psnr(const media::Image& a, const media::Image& b, double max_value) {
  if (!a.same_shape(b)) throw ValidationError("psnr: image shapes differ");
  return psnr(a.pixels, b.pixels, max_value);
}

double ssim_gray(const std::vector<double>& a, const std::vector<double>& b, int height, int width,
                 double data_range) {
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (height < kWin || width < kWin) throw ValidationError("ssim: image smaller than the 11x11 window");
  if (a.size() != b.size() || a.size() != static_cast<std::size_t>(height) * width)
    throw ValidationError("ssim: plane sizes differ");
  std::vector<double> k(kWin);
  for (int i = 0; i < kWin; ++i) k[i] = std::exp(-0.5 * (i - kWin / 2) * (i - kWin / 2) / (kSigma * kSigma));
  const double ksum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= ksum;

  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto ma = filter_valid(a, height, width, k), mb = filter_valid(b, height, width, k);
  const auto maa = filter_valid(aa, height, width, k), mbb = filter_valid(bb, height, width, k);
  const auto mab = filter_valid(ab, height, width, k);
  const double c1 = std::pow(0.01 * data_range, 2), c2 = std::pow(0.03 * data_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    const double va = maa[i] - ma[i] * ma[i], vb = mbb[i] - mb[i] * mb[i], cov = mab[i] - ma[i] * mb[i];
    total += ((2 * ma[i] * mb[i] + c1) * (2 * cov + c2)) / ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
  }
  return total / ma.size();
}

double ssim(const media::Image& a, const media::Image& b, double data_range) {
  if (!a.same_shape(b)) throw ValidationError("ssim: image shapes differ");
  return ssim_gray(media::to_gray(a), media::to_gray(b), a.height, a.width, data_range);
}

double cpbd(const media::Image& image, const CpbdSettings& s) {
  const int h = image.height, w = image.width;
  if (h < 3 || w < 3) throw ValidationError("cpbd: image smaller than 3x3");
  std::vector<double> g = media::to_gray(image);
  for (double& v : g) v *= 255.0;
  auto px = [&](int y, int x) { return g[static_cast<std::size_t>(y) * w + x]; };

  // Horizontal Sobel response; borders stay 0.
  std::vector<double> gx(g.size(), 0.0);
  double gmax = 0.0;
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      const double v = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                       (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      gx[static_cast<std::size_t>(y) * w + x] = v;
      gmax = std::max(gmax, std::abs(v));
    }
  if (gmax < 1e-9) return 0.0;
  auto grad = [&](int y, int x) { return std::abs(gx[static_cast<std::size_t>(y) * w + x]); };

  std::vector<char> edge(g.size(), 0);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      const double m = grad(y, x);
      if (m >= s.edge_threshold * gmax && m >= grad(y, x - 1) && m > grad(y, x + 1))
        edge[static_cast<std::size_t>(y) * w + x] = 1;
    }

  // Distance between the intensity extrema bracketing the edge along its row.
  auto edge_width = [&](int y, int x) {
    const double dir = gx[static_cast<std::size_t>(y) * w + x] > 0 ? 1.0 : -1.0;
    int right = x;
    while (right + 1 < w && dir * (px(y, right + 1) - px(y, right)) > 0) ++right;
    int left = x;
    while (left - 1 >= 0 && dir * (px(y, left) - px(y, left - 1)) > 0) --left;
    return static_cast<double>(std::max(right - left, 1));
  };

  long total = 0, sharp = 0;
  for (int by = 0; by < h; by += s.block)
    for (int bx = 0; bx < w; bx += s.block) {
      const int ey = std::min(by + s.block, h), ex = std::min(bx + s.block, w);
      long count = 0;
      double lo = 255.0 * 4, hi = -255.0 * 4;
      for (int y = by; y < ey; ++y)
        for (int x = bx; x < ex; ++x) {
          count += edge[static_cast<std::size_t>(y) * w + x];
          lo = std::min(lo, px(y, x));
          hi = std::max(hi, px(y, x));
        }
      if (count <= s.edge_block_ratio * (ey - by) * (ex - bx)) continue;
      const double jnb = (hi - lo) > s.contrast_split ? s.jnb_high_contrast : s.jnb_low_contrast;
      for (int y = by; y < ey; ++y)
        for (int x = bx; x < ex; ++x) {
          if (!edge[static_cast<std::size_t>(y) * w + x]) continue;
          const double p = 1.0 - std::exp(-std::pow(edge_width(y, x) / jnb, s.beta));
          ++total;
          if (p <= s.p_jnb) ++sharp;
        }
    }
  return total == 0 ? 0.0 : static_cast<double>(sharp) / total;
}

KidResult kid(const std::vector<std::vector<double>>& real, const std::vector<std::vector<double>>& fake,
              const KidSettings& s) {
  if (real.size() < 2 || fake.size() < 2) throw ValidationError("kid: each set needs at least 2 samples");
  if (real.front().empty() || real.front().size() != fake.front().size())
    throw ValidationError("kid: feature dimensions differ");
  if (s.subsets < 1 || s.subset_size < 2) throw ValidationError("kid: invalid resampling settings");
  const int n = static_cast<int>(real.size()), m = static_cast<int>(fake.size());
  if (n <= s.subset_size && m <= s.subset_size)
    return {unbiased_mmd(to_matrix(real, iota_n(n)), to_matrix(fake, iota_n(m))), 0.0};

  ag::Rng rng(s.seed);
  const int sn = std::min(n, s.subset_size), sm = std::min(m, s.subset_size);
  const auto all_n = iota_n(n), all_m = iota_n(m);
  std::vector<double> est;
  for (int i = 0; i < s.subsets; ++i) {
    std::vector<int> pn, pm;
    std::sample(all_n.begin(), all_n.end(), std::back_inserter(pn), sn, rng);
    std::sample(all_m.begin(), all_m.end(), std::back_inserter(pm), sm, rng);
    est.push_back(unbiased_mmd(to_matrix(real, pn), to_matrix(fake, pm)));
  }
  return {mean_of(est), std_of(est)};
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return na == nb ? 0.0 : 1.0;
  return 1.0 - dot / std::sqrt(na * nb);
}

double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("embedding dimensions differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

AcdResult acd(const std::vector<media::Image>& frames, const media::Image& reference,
              const EmbeddingProvider& provider) {
  if (frames.empty()) throw ValidationError("acd: no frames");
  const auto ref = provider.embed(reference);
  if (!ref) throw ProviderError(provider.name() + " failed on the reference image");
  AcdResult r;
  std::vector<int> failed;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto e = provider.embed(frames[i]);
    if (!e) {
      failed.push_back(static_cast<int>(i));
      continue;
    }
    r.cosine += cosine_distance(*e, *ref);
    r.euclidean += euclidean_distance(*e, *ref);
  }
  if (!failed.empty()) {
    std::string list;
    for (int f : failed) list += (list.empty() ? "" : ",") + std::to_string(f);
    throw ProviderError(provider.name() + " failed on frames " + list);
  }
  r.cosine /= frames.size();
  r.euclidean /= frames.size();
  return r;
}

int count_blinks(const std::vector<double>& ear, const BlinkSettings& s) {
  if (ear.size() < 3) throw ValidationError("blink detection needs at least 3 frames");
  if (s.consecutive_min < 1) throw ValidationError("consecutive_min must be >= 1");
  int blinks = 0, run = 0;
  for (double v : ear) {
    if (v < s.threshold) {
      ++run;
    } else {
      if (run >= s.consecutive_min) ++blinks;
      run = 0;
    }
  }
  return blinks;
}

double blinks_per_sec(const std::vector<double>& ear, double fps, const BlinkSettings& s) {
  if (!(fps > 0.0)) throw ValidationError("fps must be positive");
  return count_blinks(ear, s) / (ear.size() / fps);
}

int word_edit_distance(const std::vector<std::string>& r, const std::vector<std::string>& h) {
  std::vector<int> prev(h.size() + 1), cur(h.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= r.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= h.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r[i - 1] == h[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[h.size()];
}

double wer(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis) {
  if (reference.empty()) throw ValidationError("wer: empty reference");
  return static_cast<double>(word_edit_distance(reference, hypothesis)) / reference.size();
}

double face_ear(const FaceLandmarks& face) {
  return 0.5 * (stage1::eye_aspect_ratio(face.left) + stage1::eye_aspect_ratio(face.right));
}

// ---- report ----

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"psnr",       "ssim",          "cpbd", "kid_x100",
                                              "acd_cosine", "acd_euclidean", "blinks_per_sec", "wer"};
  return names;
}

const MetricEntry& MetricReport::at(const std::string& name) const {
  for (const auto& m : metrics)
    if (m.name == name) return m;
  throw ValidationError("report has no metric '" + name + "'");
}

namespace {

using nlohmann::json;

json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

double to_number(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw ValidationError("report: bad number '" + s + "'");
}

}  // namespace

std::string MetricReport::to_json() const {
  json j;
  j["config_hash"] = config_hash;
  j["inputs"] = inputs;
  j["providers"] = providers;
  json list = json::array();
  for (const auto& m : metrics) {
    json e;
    e["name"] = m.name;
    e["value"] = m.value ? number(*m.value) : json(nullptr);
    e["std"] = m.std ? number(*m.std) : json(nullptr);
    e["passed"] = m.passed ? json(*m.passed) : json(nullptr);
    e["skipped"] = m.skipped;
    e["note"] = m.note;
    list.push_back(e);
  }
  j["metrics"] = list;
  return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
  MetricReport r;
  try {
    const json j = json::parse(text);
    r.config_hash = j.at("config_hash").get<std::string>();
    r.inputs = j.at("inputs").get<std::vector<std::string>>();
    r.providers = j.at("providers").get<std::map<std::string, std::string>>();
    for (const auto& e : j.at("metrics")) {
      MetricEntry m;
      m.name = e.at("name").get<std::string>();
      if (!e.at("value").is_null()) m.value = to_number(e.at("value"));
      if (!e.at("std").is_null()) m.std = to_number(e.at("std"));
      if (!e.at("passed").is_null()) m.passed = e.at("passed").get<bool>();
      m.skipped = e.at("skipped").get<bool>();
      m.note = e.at("note").get<std::string>();
      r.metrics.push_back(std::move(m));
    }
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("malformed metric report: ") + ex.what());
  }
  return r;
}

void MetricReport::write(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << to_json();
}

MetricReport MetricReport::read(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string MetricReport::table() const {
  std::ostringstream out;
  out << std::left << std::setw(16) << "metric" << std::setw(14) << "value" << std::setw(12) << "std"
      << "status\n";
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    if (std::isinf(*v)) return std::string(*v > 0 ? "inf" : "-inf");
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << *v;
    return s.str();
  };
  for (const auto& name : metric_names()) {
    const MetricEntry* m = nullptr;
    for (const auto& e : metrics)
      if (e.name == name) m = &e;
    if (!m) continue;
    std::string status = m->skipped ? "skipped" : "ok";
    if (m->passed) status = *m->passed ? "pass" : "fail";
    if (m->skipped && !m->note.empty()) status += " (" + m->note + ")";
    out << std::setw(16) << name << std::setw(14) << fmt(m->value) << std::setw(12) << fmt(m->std) << status
        << "\n";
  }
  return out.str();
}

MetricReport evaluate_clip(const media::TalkingClip& generated, const media::TalkingClip& reference,
                           const EvalProviders& p, const EvalSettings& s) {
  if (generated.frames.empty() || reference.frames.empty()) throw ValidationError("evaluate: empty clip");
  if (generated.frames.size() != reference.frames.size())
    throw ValidationError("evaluate: frame counts differ (" + std::to_string(generated.frames.size()) + " vs " +
                          std::to_string(reference.frames.size()) + ")");
  if (generated.fps != reference.fps) throw ValidationError("evaluate: frame rates differ");
  if (!generated.frames[0].same_shape(reference.frames[0])) throw ValidationError("evaluate: frame sizes differ");

  MetricReport r;
  auto skipped = [&](const std::string& name, const std::string& why) {
    r.metrics.push_back({name, std::nullopt, std::nullopt, std::nullopt, true, why});
  };
  auto add = [&](const std::string& name, double v, std::optional<double> sd = std::nullopt,
                 std::optional<bool> passed = std::nullopt) {
    r.metrics.push_back({name, v, sd, passed, false, ""});
  };

  std::vector<double> ps, ss, cs;
  for (std::size_t i = 0; i < generated.frames.size(); ++i) {
    ps.push_back(psnr(generated.frames[i], reference.frames[i], s.max_value));
    ss.push_back(ssim(generated.frames[i], reference.frames[i], s.max_value));
    cs.push_back(cpbd(generated.frames[i], s.cpbd));
  }
  add("psnr", mean_of(ps), std_of(ps));
  add("ssim", mean_of(ss), std_of(ss));
  add("cpbd", mean_of(cs), std_of(cs));

  if (!p.inception) {
    skipped("kid_x100", "no inception provider");
  } else if (generated.frames.size() < 2) {
    skipped("kid_x100", "fewer than 2 frames");
  } else {
    std::vector<std::vector<double>> fr, ff;
    for (std::size_t i = 0; i < generated.frames.size(); ++i) {
      auto a = p.inception->embed(reference.frames[i]);
      auto b = p.inception->embed(generated.frames[i]);
      if (!a || !b) throw ProviderError(p.inception->name() + " failed on frame " + std::to_string(i));
      fr.push_back(std::move(*a));
      ff.push_back(std::move(*b));
    }
    const KidResult k = kid(fr, ff, s.kid);
    add("kid_x100", 100.0 * k.value, 100.0 * k.std);
    r.providers["inception"] = p.inception->name();
  }

  if (!p.identity) {
    skipped("acd_cosine", "no identity provider");
    skipped("acd_euclidean", "no identity provider");
  } else {
    const AcdResult a = acd(generated.frames, s.identity_reference.value_or(reference.frames[0]), *p.identity);
    add("acd_cosine", a.cosine, std::nullopt, a.cosine_pass());
    add("acd_euclidean", a.euclidean, std::nullopt, a.euclidean_pass());
    r.providers["identity"] = p.identity->name();
  }

  if (!p.landmarks) {
    skipped("blinks_per_sec", "no landmark provider");
  } else if (generated.frames.size() < 3) {
    skipped("blinks_per_sec", "fewer than 3 frames");
  } else {
    std::vector<double> ear;
    for (std::size_t i = 0; i < generated.frames.size(); ++i) {
      const auto lm = p.landmarks->landmarks(generated.frames[i], static_cast<int>(i));
      if (!lm) throw ProviderError(p.landmarks->name() + " failed on frame " + std::to_string(i));
      ear.push_back(face_ear(*lm));
    }
    const int blinks = p.blink_counter ? p.blink_counter(ear) : count_blinks(ear, s.blink);
    add("blinks_per_sec", blinks / (ear.size() / generated.fps));
    r.providers["landmarks"] = p.landmarks->name();
  }

  if (!p.lip_reader) {
    skipped("wer", "no lip reader");
  } else {
    const auto ref_words = p.transcript.value_or(p.lip_reader->read(reference.frames));
    if (ref_words.empty()) {
      skipped("wer", "empty reference transcript");
    } else {
      add("wer", wer(ref_words, p.lip_reader->read(generated.frames)));
      r.providers["lip_reader"] = p.lip_reader->name();
    }
  }

  for (const auto& m : r.metrics)
    if (m.value && m.name != "psnr" && !std::isfinite(*m.value))
      throw NumericError("metric " + m.name + " is not finite");
  return r;
}

}  // namespace au2av::eval
