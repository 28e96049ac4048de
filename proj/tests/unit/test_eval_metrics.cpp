#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "au2av/error.hpp"
#include "au2av/eval/metrics.hpp"

using namespace au2av;
using namespace au2av::eval;
using media::Image;

namespace {

Image gray_image(int h, int w, const std::function<double(int, int)>& f) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = f(y, x);
  return img;
}

Image box_blur5(const Image& src) {
  Image out(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx)
            acc += src.at(std::clamp(y + dy, 0, src.height - 1), std::clamp(x + dx, 0, src.width - 1), c);
        out.at(y, x, c) = acc / 25.0;
      }
  return out;
}

// Plain double loop over every pair, no matrix algebra.
double brute_mmd(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
  const double d = x[0].size();
  auto k = [d](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return std::pow(dot / d + 1.0, 3);
  };
  const double n = x.size(), m = y.size();
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      if (i != j) xx += k(x[i], x[j]);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (i != j) yy += k(y[i], y[j]);
  for (const auto& a : x)
    for (const auto& b : y) xy += k(a, b);
  return xx / (n * (n - 1)) + yy / (m * (m - 1)) - 2.0 * xy / (n * m);
}

std::vector<std::vector<double>> gaussian_set(int n, int d, double shift, std::mt19937_64& rng) {
  std::normal_distribution<double> g(shift, 1.0);
  std::vector<std::vector<double>> s(n, std::vector<double>(d));
  for (auto& row : s)
    for (double& v : row) v = g(rng);
  return s;
}

// Memoised recursion over suffixes; independent of the rolling-row DP.
int oracle_distance(const std::vector<std::string>& r, const std::vector<std::string>& h) {
  std::map<std::pair<std::size_t, std::size_t>, int> memo;
  std::function<int(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> int {
    if (i == r.size()) return static_cast<int>(h.size() - j);
    if (j == h.size()) return static_cast<int>(r.size() - i);
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    int best = r[i] == h[j] ? go(i + 1, j + 1) : 1 + go(i + 1, j + 1);
    best = std::min({best, 1 + go(i + 1, j), 1 + go(i, j + 1)});
    return memo[key] = best;
  };
  return go(0, 0);
}

std::vector<std::string> random_words(std::mt19937_64& rng, int max_len) {
  static const std::vector<std::string> vocab{"bin", "blue", "at", "e", "seven", "please", "lay", "red"};
  std::uniform_int_distribution<int> len(0, max_len), pick(0, static_cast<int>(vocab.size()) - 1);
  std::vector<std::string> out(len(rng));
  for (auto& w : out) w = vocab[pick(rng)];
  return out;
}

class TableEmbedding final : public EmbeddingProvider {
 public:
  // Keyed by the first pixel value; a missing key is a provider failure.
  std::map<double, std::vector<double>> table;
  std::string name() const override { return "table-embedding"; }
  int dimension() const override { return 2; }
  std::optional<std::vector<double>> embed(const Image& image) const override {
    auto it = table.find(image.pixels[0]);
    if (it == table.end()) return std::nullopt;
    return it->second;
  }
};

// One word per frame from its mean brightness.
class EchoLipReader final : public LipReader {
 public:
  std::string name() const override { return "echo"; }
  std::vector<std::string> read(const std::vector<Image>& frames) const override {
    std::vector<std::string> words;
    for (const auto& f : frames) {
      double m = 0.0;
      for (double v : f.pixels) m += v;
      words.push_back("w" + std::to_string(static_cast<int>(10 * m / f.pixels.size())));
    }
    return words;
  }
};

class ConstantLandmarks final : public LandmarkProvider {
 public:
  std::string name() const override { return "constant-landmarks"; }
  std::optional<FaceLandmarks> landmarks(const Image&, int) const override {
    EyeLandmarkSet e{{Point2{0, 0}, {0.3, 0.1}, {0.7, 0.1}, {1, 0}, {0.7, -0.1}, {0.3, -0.1}}};
    return FaceLandmarks{e, e};
  }
};

media::TalkingClip pattern_clip(int frames, double phase) {
  media::TalkingClip c;
  for (int t = 0; t < frames; ++t)
    c.frames.push_back(gray_image(16, 16, [&](int y, int x) {
      return 0.5 + 0.4 * std::sin(0.3 * x + 0.2 * y + 0.5 * t + phase);
    }));
  return c;
}

}  // namespace

TEST_CASE("psnr values and ordering") {
  const Image a = gray_image(8, 8, [](int y, int x) { return ((y * 8 + x) % 200) / 255.0; });
  const Image b = gray_image(8, 8, [](int y, int x) { return ((y * 8 + x) % 200 + 16) / 255.0; });
  CHECK(psnr(a, a) == kPsnrIdentical);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / 256.0)).epsilon(1e-12));
  CHECK(std::abs(psnr(a, b) - 24.0484039555606) < 1e-9);
  CHECK(psnr(a, b) == psnr(b, a));

  std::vector<double> base(100, 0.5);
  double last = kPsnrIdentical;
  for (int k = 1; k <= 40; ++k) {
    std::vector<double> other = base;
    for (double& v : other) v += 0.005 * k;  // MSE grows with k
    const double p = psnr(base, other, 1.0);
    CHECK(p < last);
    last = p;
  }
  CHECK_THROWS_AS(psnr(a, Image(8, 9)), ValidationError);
}

TEST_CASE("ssim against reference values") {
  const Image a = gray_image(24, 24, [](int y, int x) {
    double v = x < 12 ? 1.0 : 0.0;
    if (y >= 6 && y < 18 && x >= 6 && x < 9) v = 0.0;
    if (y >= 3 && y < 9 && x >= 15 && x < 21) v = 1.0;
    return v;
  });
  const Image inv = gray_image(24, 24, [&](int y, int x) { return 1.0 - a.at(y, x, 0); });
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, inv) < 0.0);
  CHECK(std::abs(ssim(a, inv) - -0.5969267934307437) < 1e-9);

  const Image p = gray_image(20, 23, [](int y, int x) { return ((y * 7 + x * 13) % 17) / 16.0; });
  const Image q = gray_image(20, 23, [](int y, int x) { return ((y * 5 + x * 3) % 11) / 10.0; });
  const Image r = gray_image(20, 23, [&](int y, int x) { return p.at(y, x, 0) * 0.5 + 0.25; });
  CHECK(std::abs(ssim(p, q) - 0.04066129593278655) < 1e-9);
  CHECK(std::abs(ssim(p, r) - 0.8014702629941801) < 1e-9);
  CHECK(ssim(p, q) == doctest::Approx(ssim(q, p)).epsilon(1e-14));
  CHECK_THROWS_AS(ssim(Image(10, 30), Image(10, 30)), ValidationError);
}

TEST_CASE("cpbd sharpness") {
  CHECK(cpbd(Image(32, 32, 0.4)) == 0.0);
  const Image step = gray_image(32, 32, [](int, int x) { return x < 16 ? 0.0 : 1.0; });
  const double sharp = cpbd(step), blurred = cpbd(box_blur5(step));
  CHECK(sharp > blurred);
  CHECK(sharp == doctest::Approx(1.0));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Image img(24, 24);
    for (double& v : img.pixels) v = u(rng);
    const double s = cpbd(img);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("kid matches the pairwise oracle") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 49;
    const auto x = gaussian_set(n, 6, 0.0, rng), y = gaussian_set(n, 6, 0.3, rng);
    worst = std::max(worst, std::abs(kid(x, y).value - brute_mmd(x, y)));
  }
  MESSAGE("worst |kid - oracle| = " << worst);
  CHECK(worst < 1e-10);

  const auto x = gaussian_set(20, 5, 0.0, rng), y = gaussian_set(20, 5, 0.0, rng);
  CHECK(std::abs(kid(x, y).value - brute_mmd(x, y)) < 1e-10);
  CHECK(kid(x, y).value == doctest::Approx(kid(y, x).value).epsilon(1e-13));
  CHECK(kid(x, y).std == 0.0);

  const std::vector<std::vector<double>> same(7, std::vector<double>{0.3, -1.0, 2.0});
  CHECK(std::abs(kid(same, same).value) < 1e-12);
  CHECK_THROWS_AS(kid({{1.0}}, {{1.0}, {2.0}}), ValidationError);
}

TEST_CASE("kid is unbiased on one distribution") {
  std::mt19937_64 rng(17);
  std::vector<double> est;
  for (int t = 0; t < 200; ++t) est.push_back(kid(gaussian_set(10, 4, 0.0, rng), gaussian_set(10, 4, 0.0, rng)).value);
  double mean = 0.0, var = 0.0;
  for (double v : est) mean += v / est.size();
  for (double v : est) var += (v - mean) * (v - mean) / (est.size() - 1);
  const double se = std::sqrt(var / est.size());
  MESSAGE("mean " << mean << " se " << se);
  CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("kid resamples large sets") {
  std::mt19937_64 rng(2);
  const auto x = gaussian_set(130, 3, 0.0, rng), y = gaussian_set(140, 3, 1.0, rng);
  const KidResult a = kid(x, y), b = kid(x, y);
  CHECK(a.value == b.value);
  CHECK(a.std > 0.0);
  CHECK(a.value > 5.0 * a.std);
}

TEST_CASE("acd distances and thresholds") {
  TableEmbedding emb;
  emb.table[0.1] = {1.0, 0.0};
  emb.table[0.2] = {0.0, 1.0};
  emb.table[0.3] = {2.0, 0.0};
  const Image ref(4, 4, 0.1), orth(4, 4, 0.2), scaled(4, 4, 0.3);

  const AcdResult same = acd({ref, ref}, ref, emb);
  CHECK(same.cosine == 0.0);
  CHECK(same.euclidean == 0.0);
  CHECK(same.cosine_pass());
  CHECK(same.euclidean_pass());

  const AcdResult o = acd({orth}, ref, emb);
  CHECK(o.cosine == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(o.euclidean == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_FALSE(o.cosine_pass());
  CHECK_FALSE(o.euclidean_pass());

  const AcdResult s = acd({scaled}, ref, emb);  // same direction, farther away
  CHECK(s.cosine == 0.0);
  CHECK(s.euclidean == 1.0);
  CHECK(kAcdCosineThreshold == 0.02);
  CHECK(kAcdEuclideanThreshold == 0.20);

  try {
    acd({ref, Image(4, 4, 0.9), orth, Image(4, 4, 0.8)}, ref, emb);
    FAIL("expected a provider error");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("frames 1,3") != std::string::npos);
  }
}

TEST_CASE("blink rate") {
  CHECK(blinks_per_sec(std::vector<double>(75, 0.3), 25.0) == 0.0);

  std::vector<double> two(75, 0.3);
  for (int i : {20, 21, 22, 50, 51, 52}) two[i] = 0.05;
  CHECK(count_blinks(two) == 2);
  CHECK(blinks_per_sec(two, 25.0) == 2.0 / 3.0);
  CHECK(std::abs(blinks_per_sec(two, 25.0) - 0.667) < 5e-4);

  std::vector<double> flicker(75, 0.3);
  flicker[30] = 0.05;
  CHECK(blinks_per_sec(flicker, 25.0, {0.2, 2}) == 0.0);
  CHECK(count_blinks(flicker, {0.2, 1}) == 1);

  std::vector<double> closing(10, 0.3);
  closing[8] = closing[9] = 0.05;  // never reopens
  CHECK(count_blinks(closing) == 0);

  for (double k : {0.5, 3.0, 40.0}) {
    std::vector<double> scaled = two;
    for (double& v : scaled) v *= k;
    CHECK(blinks_per_sec(scaled, 25.0, {0.2 * k, 2}) == blinks_per_sec(two, 25.0));
  }
  CHECK_THROWS_AS(count_blinks({0.3, 0.3}), ValidationError);
}

TEST_CASE("word error rate") {
  const auto ref = split_words("bin blue at e seven please");
  CHECK(wer(ref, ref) == 0.0);
  CHECK(wer(ref, split_words("bin blue at c seven please")) == 1.0 / 6.0);
  CHECK(wer(ref, {}) == 1.0);
  CHECK(wer({"a"}, {"b", "c", "d"}) == 3.0);
  CHECK_THROWS_AS(wer({}, ref), ValidationError);

  std::mt19937_64 rng(29);
  for (int t = 0; t < 1000; ++t) {
    const auto r = random_words(rng, 12), h = random_words(rng, 12);
    REQUIRE(word_edit_distance(r, h) == oracle_distance(r, h));
  }
  for (int t = 0; t < 300; ++t) {
    auto r = random_words(rng, 10);
    if (r.empty()) r.push_back("bin");
    const auto m = random_words(rng, 10), h = random_words(rng, 10);
    const double via = static_cast<double>(oracle_distance(r, m) + oracle_distance(m, h)) / r.size();
    CHECK(wer(r, h) <= via + 1e-15);
  }
}

TEST_CASE("clip evaluation report") {
  const auto ref = pattern_clip(4, 0.0);
  EchoLipReader reader;
  ConstantLandmarks marks;
  ConvEmbeddingProvider conv;
  EvalProviders providers;
  providers.lip_reader = &reader;
  providers.landmarks = &marks;
  providers.identity = &conv;
  providers.inception = &conv;

  const MetricReport self = evaluate_clip(ref, ref, providers);
  CHECK(self.metrics.size() == metric_names().size());
  CHECK(self.at("psnr").value == kPsnrIdentical);
  CHECK(*self.at("ssim").value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*self.at("wer").value == 0.0);
  CHECK(*self.at("blinks_per_sec").value == 0.0);
  CHECK(std::isfinite(*self.at("kid_x100").value));  // the cross term keeps its diagonal, so not exactly 0
  CHECK(*self.at("acd_euclidean").passed);

  auto dim = pattern_clip(4, 0.7);
  for (auto& f : dim.frames)
    for (double& v : f.pixels) v *= 0.5;
  const MetricReport other = evaluate_clip(dim, ref, providers);
  CHECK(std::isfinite(*other.at("psnr").value));
  CHECK(*other.at("ssim").value < 1.0);
  CHECK(*other.at("wer").value > 0.0);

  // Round trip keeps every field, including the infinite PSNR.
  MetricReport tagged = self;
  tagged.inputs = {"gen/manifest.txt", "ref/manifest.txt"};
  tagged.config_hash = "0123456789abcdef";
  CHECK(MetricReport::from_json(tagged.to_json()) == tagged);
  CHECK(MetricReport::from_json(other.to_json()) == other);
  CHECK(tagged.to_json() == MetricReport(tagged).to_json());

  const MetricReport bare = evaluate_clip(ref, ref, {});
  for (const auto& name : {"kid_x100", "acd_cosine", "acd_euclidean", "blinks_per_sec", "wer"}) {
    CHECK(bare.at(name).skipped);
    CHECK_FALSE(bare.at(name).value.has_value());
  }
  CHECK(bare.table().find("wer             -             -           skipped (no lip reader)") != std::string::npos);

  CHECK_THROWS_AS(evaluate_clip(pattern_clip(3, 0.0), ref, providers), ValidationError);
}
