#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "au2av/error.hpp"
#include "au2av/stage1/losses.hpp"
#include "gradcheck.hpp"

using namespace au2av;
using namespace au2av::stage1;
using ag::Tensor;
using ag::Var;
using au2av::testing::grad_check;
using au2av::testing::random_tensor;

namespace {

Var full(const ag::Shape& s, double v) { return Var(Tensor(s, v)); }

EyeLandmarkSet hexagon() {
  EyeLandmarkSet e;
  e.p = {Point2{0, 0}, Point2{1, 1}, Point2{3, 1}, Point2{4, 0}, Point2{3, -1}, Point2{1, -1}};
  return e;
}

EyeLandmarkSet transform(const EyeLandmarkSet& e, double angle, double scale, double tx, double ty) {
  EyeLandmarkSet out;
  for (int i = 0; i < 6; ++i) {
    const Point2 p = e.p[i];
    out.p[i] = {scale * (std::cos(angle) * p.x - std::sin(angle) * p.y) + tx,
                scale * (std::sin(angle) * p.x + std::cos(angle) * p.y) + ty};
  }
  return out;
}

LossBundle ones() {
  LossBundle b;
  for (LossTerm t : all_loss_terms()) b[t] = ag::scalar(1.0);
  return b;
}

const double kLn2 = std::numbers::ln2;

}  // namespace

TEST_CASE("adversarial loss closed forms") {
  const ag::Shape s{1, 1, 4, 4};
  CHECK(adversarial_loss({full(s, 1.0)}, {full(s, 0.0)}, Side::kDiscriminator).item() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(adversarial_loss({full(s, 0.5)}, {full(s, 0.5)}, Side::kDiscriminator).item() == doctest::Approx(2 * kLn2));
  CHECK(adversarial_loss({full(s, 0.5), full(s, 0.5), full(s, 0.5)}, {full(s, 0.5), full(s, 0.5), full(s, 0.5)},
                         Side::kDiscriminator)
            .item() == doctest::Approx(6 * kLn2));
  const double g1 = adversarial_loss({}, {full(s, 0.1)}, Side::kGenerator).item();
  const double g5 = adversarial_loss({}, {full(s, 0.5)}, Side::kGenerator).item();
  const double g9 = adversarial_loss({}, {full(s, 0.9)}, Side::kGenerator).item();
  CHECK(g1 > g5);
  CHECK(g5 > g9);
  // Out-of-range scores are clamped, never NaN.
  CHECK(std::isfinite(adversarial_loss({full(s, 1.5)}, {full(s, -0.2)}, Side::kDiscriminator).item()));
}

TEST_CASE("temporal adversarial loss over window positions") {
  const ag::Shape s{1, 5, 2, 2};
  const double d = temporal_adversarial_loss({full(s, 0.5)}, {full(s, 0.5)}, 4, Side::kDiscriminator).item();
  CHECK(-d == doctest::Approx(10 * std::log(0.5)));
  CHECK(temporal_adversarial_loss({full(s, 1.0)}, {full(s, 0.0)}, 4, Side::kDiscriminator).item() ==
        doctest::Approx(0.0).epsilon(1e-5));

  ag::Rng rng(1);
  const Var r(random_tensor({1, 1, 3, 3}, rng, 0.1, 0.9));
  const Var f(random_tensor({1, 1, 3, 3}, rng, 0.1, 0.9));
  CHECK(temporal_adversarial_loss({r}, {f}, 0, Side::kDiscriminator).item() ==
        doctest::Approx(adversarial_loss({r}, {f}, Side::kDiscriminator).item()));
  CHECK_THROWS_AS(temporal_adversarial_loss({full(s, 0.5)}, {full(s, 0.5)}, 3, Side::kDiscriminator), ValidationError);
}

TEST_CASE("feature matching closed forms") {
  ag::Rng rng(2);
  const Var a(random_tensor({1, 2, 3, 3}, rng));
  CHECK(feature_matching_loss({{a}}, {{a}}).item() == 0.0);
  CHECK(feature_matching_loss({{full({4}, 1.0)}}, {{full({4}, 0.0)}}).item() == doctest::Approx(1.0));
  const Var b(random_tensor({1, 2, 3, 3}, rng));
  const double base = feature_matching_loss({{a, b}}, {{b, a}}).item();
  CHECK(feature_matching_loss({{a * 3.0, b * 3.0}}, {{b * 3.0, a * 3.0}}).item() == doctest::Approx(3 * base));
  CHECK_THROWS_AS(feature_matching_loss({{a}}, {{a, b}}), ValidationError);
}

TEST_CASE("perceptual loss with the identity provider") {
  const IdentityFeatureProvider id;
  const Var a(Tensor({1, 3, 2, 2}, 0.25));
  CHECK(perceptual_loss(a, a, id).item() == 0.0);
  CHECK(perceptual_loss(a, a + 1.0, id).item() == doctest::Approx(1.0));
  const RandomConvFeatureProvider conv;
  CHECK(perceptual_loss(a, a, conv).item() == 0.0);
}

TEST_CASE("lower-half reconstruction loss") {
  ag::Rng rng(3);
  const Tensor real = random_tensor({1, 3, 8, 6}, rng);
  Tensor top = real;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) top[(c * 8 + y) * 6 + x] += 0.5;
  CHECK(reconstruction_loss_lower(Var(real), Var(real)).item() == 0.0);
  CHECK(reconstruction_loss_lower(Var(real), Var(top)).item() == 0.0);
  CHECK(reconstruction_loss_lower(Var(real), Var(real) + 0.5).item() == doctest::Approx(0.5));
  // Arbitrary perturbations confined to the top rows leave it at zero.
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p = real;
    const Tensor noise = random_tensor(real.shape(), rng, -10, 10);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) p[(c * 8 + y) * 6 + x] += noise[(c * 8 + y) * 6 + x];
    CHECK(reconstruction_loss_lower(Var(real), Var(p)).item() == 0.0);
  }
  CHECK_THROWS_AS(reconstruction_loss_lower(Var(real), Var(Tensor({1, 3, 8, 5}, 0.0))), ValidationError);
}

TEST_CASE("contrastive loss closed forms") {
  const Var v(Tensor({1, 2}, {1.0, 1.0}));
  CHECK(contrastive_loss(v, v, {1.0}, 1.0).item() == 0.0);
  const Var far(Tensor({1, 2}, {1.0, 3.0}));  // d = 2
  CHECK(contrastive_loss(v, far, {0.0}, 1.0).item() == 0.0);
  CHECK(contrastive_loss(v, far, {1.0}, 1.0).item() == doctest::Approx(2.0));
  CHECK(pair_distances(v, far)[0] == doctest::Approx(2.0));
  CHECK_THROWS_AS(contrastive_loss(v, v, {1.0}, 0.0), ValidationError);
  CHECK_THROWS_AS(contrastive_loss(Var(Tensor({0, 2}, 0.0)), Var(Tensor({0, 2}, 0.0)), {}, 1.0), ValidationError);

  // For false pairs inside the margin the penalty shrinks as d grows.
  double prev = 1e9;
  for (double d = 0.0; d < 2.0; d += 0.1) {
    const double l = contrastive_loss(v, Var(Tensor({1, 2}, {1.0, 1.0 + d})), {0.0}, 2.0).item();
    CHECK(l <= prev);
    prev = l;
  }
}

TEST_CASE("eye aspect ratio") {
  CHECK(eye_aspect_ratio(hexagon()) == doctest::Approx(1.0));
  EyeLandmarkSet closed = hexagon();
  closed.p[1] = closed.p[5];
  closed.p[2] = closed.p[4];
  CHECK(eye_aspect_ratio(closed) == 0.0);
  CHECK(eye_aspect_ratio(transform(hexagon(), 0.0, 7.0, 0.0, 0.0)) == doctest::Approx(1.0));
  ag::Rng rng(4);
  std::uniform_real_distribution<double> u(-5, 5);
  EyeLandmarkSet e;
  for (auto& p : e.p) p = {u(rng), u(rng)};
  e.p[3] = {e.p[0].x + 4, e.p[0].y};
  const double base = eye_aspect_ratio(e);
  for (int i = 0; i < 50; ++i) {
    const double scale = std::exp(u(rng) / 2);
    CHECK(std::abs(eye_aspect_ratio(transform(e, u(rng), scale, 10 * u(rng), 10 * u(rng))) - base) < 1e-9);
  }
  EyeLandmarkSet bad = hexagon();
  bad.p[3] = bad.p[0];
  CHECK_THROWS_AS(eye_aspect_ratio(bad), ValidationError);

  FaceLandmarks f{hexagon(), closed};
  const Tensor t = landmarks_to_tensor({f});
  CHECK(eye_aspect_ratio(Var(t)).item() == doctest::Approx(0.5).epsilon(1e-5));  // smoothed distance on the closed eye
}

TEST_CASE("blink loss") {
  CHECK(blink_loss(0.3, 0.3) == 0.0);
  CHECK(blink_loss(0.3, 0.25) == doctest::Approx(0.05));
  CHECK(blink_loss(0.3, 0.25) == blink_loss(0.25, 0.3));
  const Var a(Tensor({2}, {0.3, 0.2})), b(Tensor({2}, {0.25, 0.3}));
  CHECK(blink_loss(a, b).item() == doctest::Approx(0.075));
  CHECK(blink_loss(a, b).item() == blink_loss(b, a).item());
}

TEST_CASE("stage-1 objective gating") {
  Stage1LossWeights w{1, 1, 1, 1, 1, 1};
  CHECK(stage1_objective(ones(), w, 1).item() == doctest::Approx(3.0));
  CHECK(stage1_objective(ones(), w, 2).item() == doctest::Approx(6.0));
  CHECK(stage1_objective(ones(), w, 3).item() == doctest::Approx(7.0));
  CHECK(active_losses(3).size() == 7);

  LossBundle huge = ones();
  huge[LossTerm::kBlink] = ag::scalar(1e9);
  CHECK(stage1_objective(huge, w, 2).item() == doctest::Approx(6.0));
  w.blink = 0.0;
  CHECK(stage1_objective(huge, w, 3).item() == doctest::Approx(6.0));

  LossBundle missing = ones();
  missing.erase(LossTerm::kBlink);
  CHECK(stage1_objective(missing, w, 2).item() == doctest::Approx(6.0));
  CHECK_THROWS_AS(stage1_objective(missing, w, 3), ValidationError);
  CHECK_THROWS_AS(stage1_objective(ones(), w, 4), ValidationError);

  const Stage1LossWeights defaults;
  CHECK(defaults.feature_matching == 10.0);
  CHECK(defaults.perceptual == 10.0);
  CHECK(defaults.contrastive == 1.0);
  CHECK(defaults.blink == 10.0);
  CHECK(defaults.margin == 1.0);
  CHECK_THROWS_AS((Stage1LossWeights{-1, 1, 1, 1, 1, 1}.validate()), ValidationError);
}

TEST_CASE("loss gradients match finite differences over 20 random inputs") {
  const RandomConvFeatureProvider conv(19, 3);
  double worst = 0.0;
  for (unsigned trial = 0; trial < 20; ++trial) {
    ag::Rng rng(100 + trial);
    const Tensor p1 = random_tensor({1, 5, 2, 2}, rng, 0.05, 0.95);
    const Tensor p2 = random_tensor({1, 5, 2, 2}, rng, 0.05, 0.95);
    auto r = grad_check(
        [](const std::vector<Var>& v) {
          return adversarial_loss({v[0]}, {v[1]}, Side::kDiscriminator) + adversarial_loss({}, {v[1]}, Side::kGenerator) +
                 temporal_adversarial_loss({v[0]}, {v[1]}, 4, Side::kDiscriminator);
        },
        {p1, p2});
    worst = std::max(worst, r.max_relative_error);

    const Tensor f1 = random_tensor({1, 2, 3, 3}, rng), f2 = random_tensor({1, 2, 3, 3}, rng);
    r = grad_check([](const std::vector<Var>& v) { return feature_matching_loss({{v[0]}}, {{v[1]}}); }, {f1, f2});
    worst = std::max(worst, r.max_relative_error);

    const Tensor a = random_tensor({1, 3, 8, 8}, rng), b = random_tensor({1, 3, 8, 8}, rng);
    r = grad_check([&](const std::vector<Var>& v) { return perceptual_loss(ag::constant(a), v[0], conv); }, {b});
    worst = std::max(worst, r.max_relative_error);
    r = grad_check([](const std::vector<Var>& v) { return reconstruction_loss_lower(v[0], v[1]); }, {a, b});
    worst = std::max(worst, r.max_relative_error);

    const Tensor e1 = random_tensor({3, 4}, rng), e2 = random_tensor({3, 4}, rng);
    r = grad_check([](const std::vector<Var>& v) { return contrastive_loss(v[0], v[1], {1.0, 0.0, 0.0}, 2.5); }, {e1, e2});
    worst = std::max(worst, r.max_relative_error);

    Tensor lm = random_tensor({2, 24}, rng, 0, 10);
    for (int n = 0; n < 2; ++n)
      for (int eye = 0; eye < 2; ++eye) lm[n * 24 + eye * 12 + 6] += 20;  // p4 well away from p1
    const Tensor ear_ref = random_tensor({2}, rng, 0, 0.1);
    r = grad_check(
        [&](const std::vector<Var>& v) { return blink_loss(ag::constant(ear_ref), eye_aspect_ratio(v[0])); }, {lm});
    worst = std::max(worst, r.max_relative_error);
  }
  CHECK(worst < 1e-3);
}
