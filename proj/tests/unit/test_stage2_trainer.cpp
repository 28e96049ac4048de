#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "au2av/error.hpp"
#include "au2av/media/toy_data.hpp"
#include "au2av/stage2/trainer.hpp"
#include "gradcheck.hpp"
#include "tempdir.hpp"

using namespace au2av;
using namespace au2av::stage2;
using ag::Tensor;
using ag::Var;
using au2av::testing::grad_check;
using au2av::testing::random_tensor;
using au2av::testing::TempDir;
namespace fs = std::filesystem;

namespace {

Var full(const ag::Shape& s, double v) { return Var(Tensor(s, v)); }

Stage2Config tiny_config() {
  Stage2Config c;
  c.resolution = 16;
  c.generator_width = 4;
  c.residual_blocks = 2;
  c.disc_width = 4;
  c.predictor_width = 4;
  c.landmark_width = 4;
  return c;
}

// Eye with corners (0,0), (1,0) and both lid gaps equal to `ear`.
std::vector<double> eye_row(double ear) {
  const double h = ear / 4.0;  // two lid gaps over unit width
  return {0, 0, 0.3, h, 0.7, h, 1, 0, 0.7, -h, 0.3, -h};
}

Var landmark_rows(const std::vector<double>& ears) {
  std::vector<double> v;
  for (double e : ears) {
    const auto eye = eye_row(e);
    v.insert(v.end(), eye.begin(), eye.end());
    v.insert(v.end(), eye.begin(), eye.end());
  }
  return Var(Tensor({static_cast<int>(ears.size()), 24}, v));
}

std::pair<DomainClip, DomainClip> toy_pair(int frames, int resolution) {
  toy::ToyClipOptions o;
  o.frames = frames;
  o.size = resolution;
  o.seed = 3;
  o.with_audio = false;
  const toy::ToyClip h = toy::make_toy_clip(o);
  o.style = toy::FaceStyle::kAnime;
  o.seed = 5;
  const toy::ToyClip a = toy::make_toy_clip(o);
  return {make_domain_clip("human", h.clip, resolution, h.landmarks), make_domain_clip("anime", a.clip, resolution, a.landmarks)};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("LSGAN values") {
  const ag::Shape s{2, 1, 3, 3};
  CHECK(lsgan_loss({full(s, 1.0)}, {full(s, 0.0)}, Side::kDiscriminator).item() == 0.0);
  CHECK(lsgan_loss({full(s, 0.5)}, {full(s, 0.5)}, Side::kDiscriminator).item() == 0.5);
  CHECK(lsgan_loss({full(s, 0.5), full(s, 0.5)}, {full(s, 0.5), full(s, 0.5)}, Side::kDiscriminator).item() == 1.0);
  CHECK(lsgan_loss({}, {full(s, 1.0), full(s, 1.0)}, Side::kGenerator).item() == 0.0);
  CHECK(lsgan_loss({}, {full(s, 0.999)}, Side::kGenerator).item() > 0.0);

  double best = 1e9, best_r = 0, best_f = 0;
  for (int i = -20; i <= 20; ++i)
    for (int j = -20; j <= 20; ++j) {
      const double r = i / 10.0, f = j / 10.0;
      const double v = lsgan_loss({full({1}, r)}, {full({1}, f)}, Side::kDiscriminator).item();
      if (v < best) best = v, best_r = r, best_f = f;
    }
  CHECK(best == 0.0);
  CHECK(best_r == 1.0);
  CHECK(best_f == 0.0);
}

TEST_CASE("recycle loss") {
  const ag::Shape s{1, 3, 4, 4};
  const std::vector<Var> constant(3, full(s, 0.4));
  const FrameMap id = [](const Var& v) { return v; };
  const NextFrame repeat_last = [](const std::vector<Var>& w) { return w.back(); };
  const NextFrame off = [](const std::vector<Var>& w) { return w.back() + 0.1; };
  CHECK(recycle_loss(constant, 2, id, repeat_last, id).item() == 0.0);
  CHECK(recycle_loss(constant, 2, id, off, id).item() == doctest::Approx(0.01).epsilon(1e-12));
  CHECK_THROWS_AS(recycle_loss({constant[0], constant[1]}, 2, id, off, id), ValidationError);

  // With identity generators recycle reduces to the predictor loss of its window.
  std::mt19937_64 rng(1);
  const std::vector<Var> clip{Var(random_tensor(s, rng)), Var(random_tensor(s, rng)), Var(random_tensor(s, rng))};
  const NextFrame mix = [](const std::vector<Var>& w) { return w[0] * 0.3 + w[1] * 0.6; };
  CHECK(std::abs(recycle_loss(clip, 2, id, mix, id).item() - predictor_loss(clip, 2, mix).item()) < 1e-9);

  // Gradients reach both generators and the predictor.
  Stage2Model m = Stage2Model::create(tiny_config(), 2);
  std::vector<Var> frames;
  for (int i = 0; i < 3; ++i) frames.emplace_back(random_tensor({1, 3, 16, 16}, rng));
  const Var loss = recycle_loss(
      frames, 2, [&](const Var& v) { return m.to_target(v).frame; },
      [&](const std::vector<Var>& w) { return m.predict_target(w); }, [&](const Var& v) { return m.to_source(v).frame; });
  ag::backward(loss);
  auto grad_norm = [](const ag::ParamStore& st) {
    double acc = 0.0;
    for (const auto& n : st.names()) {
      const Tensor g = st.get(n).grad();
      for (double v : g.storage()) acc += v * v;
    }
    return acc;
  };
  CHECK(grad_norm(m.gen_s2t_params) > 0.0);
  CHECK(grad_norm(m.gen_t2s_params) > 0.0);
  CHECK(grad_norm(m.predictor_t_params) > 0.0);
  CHECK(grad_norm(m.predictor_s_params) == 0.0);
}

TEST_CASE("identity, CAM, lip-sync and blink losses") {
  std::mt19937_64 rng(3);
  const Var x(random_tensor({2, 3, 8, 8}, rng));
  CHECK(identity_loss(x, x).item() == 0.0);
  CHECK(identity_loss(x, x + 0.2).item() == doctest::Approx(0.2).epsilon(1e-12));

  const Var zero2 = full({2}, 0.0);
  CHECK(cam_loss(zero2, zero2).item() == doctest::Approx(2.0 * std::numbers::ln2).epsilon(1e-15));
  CHECK(cam_loss(full({3}, 1e4), full({3}, -1e4)).item() < 1e-12);
  const Var a(Tensor({3}, {0.3, -1.2, 2.0})), b(Tensor({2}, {0.5, -0.7}));
  const Var a_perm(Tensor({3}, {2.0, 0.3, -1.2})), b_perm(Tensor({2}, {-0.7, 0.5}));
  CHECK(cam_loss(a, b).item() == doctest::Approx(cam_loss(a_perm, b_perm).item()).epsilon(1e-15));
  CHECK(cam_adversarial_loss({zero2}).item() == doctest::Approx(std::numbers::ln2).epsilon(1e-15));

  CHECK(lip_sync_loss(x, x).item() == 0.0);
  Tensor top = x.value();
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 8; ++w) top.at(n, c, h, w) += 0.3;
  CHECK(lip_sync_loss(x, Var(top)).item() == 0.0);
  CHECK(lip_sync_loss(x, x + 0.3).item() == doctest::Approx(0.3).epsilon(1e-12));
  for (int trial = 0; trial < 20; ++trial) {
    const Var c(random_tensor({2, 3, 8, 8}, rng));
    // Region sums: lower half over its pixels vs the whole frame over all pixels.
    CHECK(lip_sync_loss(x, c).item() * 0.5 <= identity_loss(x, c).item() + 1e-15);
  }

  const Var same = landmark_rows({0.3, 0.25});
  CHECK(stage2_blink_loss(same, same).item() == 0.0);
  CHECK(stage2_blink_loss(landmark_rows({0.28}), landmark_rows({0.33})).item() == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(stage2_blink_loss(landmark_rows({0.33}), landmark_rows({0.28})).item() ==
        stage2_blink_loss(landmark_rows({0.28}), landmark_rows({0.33})).item());
}

TEST_CASE("predictor loss windows") {
  const std::vector<Var> clip(5, full({1, 3, 4, 4}, -0.2));
  int calls = 0;
  const NextFrame perfect = [&](const std::vector<Var>& w) {
    ++calls;
    CHECK(w.size() == 2);
    return w.back();
  };
  CHECK(predictor_loss(clip, 2, perfect).item() == 0.0);
  CHECK(calls == 3);
  const NextFrame off = [](const std::vector<Var>& w) { return w.back() - 0.1; };
  CHECK(predictor_loss(clip, 2, off).item() == doctest::Approx(0.03).epsilon(1e-12));
  CHECK_THROWS_AS(predictor_loss({clip[0], clip[1]}, 2, off), ValidationError);
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(5);
  const ag::Shape s{2, 3, 4, 4};
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor r = random_tensor(s, rng), f = random_tensor(s, rng), g = random_tensor(s, rng);
    auto track = [&](const testing::GradCheckResult& res) { worst = std::max(worst, res.max_relative_error); };
    track(grad_check([](const std::vector<Var>& v) { return lsgan_loss({v[0]}, {v[1]}, Side::kDiscriminator); }, {r, f}));
    track(grad_check([](const std::vector<Var>& v) { return lsgan_loss({}, {v[0], v[1]}, Side::kGenerator); }, {r, f}));
    track(grad_check([](const std::vector<Var>& v) { return identity_loss(v[0], v[1]); }, {r, f}));
    track(grad_check([](const std::vector<Var>& v) { return lip_sync_loss(v[0], v[1]); }, {r, f}));
    track(grad_check([](const std::vector<Var>& v) { return cam_loss(v[0], v[1]); },
                     {random_tensor({3}, rng, -4, 4), random_tensor({2}, rng, -4, 4)}));
    track(grad_check([](const std::vector<Var>& v) { return cam_adversarial_loss({v[0], v[1]}); },
                     {random_tensor({3}, rng, -4, 4), random_tensor({3}, rng, -4, 4)}));
    // Recycle through differentiable stand-ins for the three networks.
    track(grad_check(
        [](const std::vector<Var>& v) {
          const std::vector<Var> frames{v[0], v[1], v[2]};
          return recycle_loss(
              frames, 2, [&](const Var& x) { return ag::tanh(x * v[3]); },
              [&](const std::vector<Var>& w) { return w[0] * 0.4 + w[1] * v[3]; },
              [&](const Var& x) { return x * x * 0.5 + x; });
        },
        {r, f, g, random_tensor({1}, rng, 0.5, 1.5)}));
    track(grad_check(
        [](const std::vector<Var>& v) {
          return predictor_loss({v[0], v[1], v[2], v[0]}, 2, [&](const std::vector<Var>& w) { return (w[0] + w[1]) * v[3]; });
        },
        {r, f, g, random_tensor({1}, rng, 0.2, 0.8)}));
    // Blink with non-degenerate eyes: jitter a regular eye.
    Tensor l1 = landmark_rows({0.3, 0.2}).value(), l2 = landmark_rows({0.25, 0.35}).value();
    const Tensor j1 = random_tensor({2, 24}, rng, -0.03, 0.03), j2 = random_tensor({2, 24}, rng, -0.03, 0.03);
    for (std::size_t i = 0; i < l1.numel(); ++i) l1.storage()[i] += j1.storage()[i], l2.storage()[i] += j2.storage()[i];
    track(grad_check([](const std::vector<Var>& v) { return stage2_blink_loss(v[0], v[1]); }, {l1, l2}));
  }
  MESSAGE("worst relative error: " << worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("objective weights and defaults") {
  const Stage2LossWeights d;
  CHECK(d.cam == 2000.0);
  CHECK(d.recycle == 100.0);
  CHECK(d.identity == 10.0);
  CHECK(d.lip == 100.0);
  CHECK(d.blink == 100.0);
  const Stage2TrainSettings s;
  CHECK(s.adam.learning_rate == 0.0001);
  CHECK(s.adam.beta1 == 0.5);
  CHECK(s.adam.beta2 == 0.999);
  CHECK(s.arch.past_frames == 2);

  Stage2Bundle b;
  double v = 1.0;
  for (Stage2Term t : generator_terms()) b[t] = ag::scalar(v++);
  // 1 + 2*2000 + 3*100 + 4*10 + 5*100 + 6*100
  CHECK(stage2_objective(b, d).item() == 1.0 + 4000.0 + 300.0 + 40.0 + 500.0 + 600.0);
  Stage2LossWeights z = d;
  z.cam = z.recycle = z.identity = z.lip = z.blink = 0.0;
  CHECK(stage2_objective(b, z).item() == 1.0);
  b[Stage2Term::kBlink] = ag::scalar(std::nan(""));
  CHECK(stage2_objective(b, z).item() == 1.0);  // a zero-weight term is not even read
  b.erase(Stage2Term::kRecycle);
  CHECK_THROWS_AS(stage2_objective(b, d), ValidationError);

  Stage2LossWeights neg;
  neg.lip = -1.0;
  CHECK_THROWS_AS(neg.validate(), ValidationError);
}

TEST_CASE("train step updates and reports every term") {
  Stage2TrainSettings s;
  s.arch = tiny_config();
  Stage2Trainer t(s);
  const auto [human, anime] = toy_pair(4, 16);
  const ag::ParamStore disc_before = t.model().disc_t_params.clone();
  const ag::ParamStore gen_before = t.model().gen_s2t_params.clone();
  const Stage2StepReport r = t.train_step(window(human, 0, 3), window(anime, 1, 3));
  CHECK(r.generator.size() == 7);
  for (const auto& [term, v] : r.generator) CHECK(std::isfinite(v));
  CHECK(r.landmark > 0.0);
  CHECK_FALSE(t.model().disc_t_params.same_values(disc_before));
  CHECK_FALSE(t.model().gen_s2t_params.same_values(gen_before));
  CHECK(t.generator_updates() == 1);
  CHECK_THROWS_AS(t.train_step(window(human, 0, 4), window(anime, 0, 3)), ValidationError);

  // Without landmarks the head is left alone.
  DomainWindow plain_h = window(human, 0, 3), plain_a = window(anime, 0, 3);
  plain_h.landmarks.reset();
  plain_a.landmarks.reset();
  const ag::ParamStore lm_before = t.model().landmark_params.clone();
  t.train_step(plain_h, plain_a);
  CHECK(t.model().landmark_params.same_values(lm_before));
}

TEST_CASE("a non-finite input aborts the step") {
  Stage2TrainSettings s;
  s.arch = tiny_config();
  Stage2Trainer t(s);
  const auto [human, anime] = toy_pair(3, 16);
  DomainWindow bad = window(human, 0, 3);
  bad.frames.storage()[5] = std::nan("");
  std::string message;
  try {
    t.train_step(bad, window(anime, 0, 3));
  } catch (const NumericError& e) {
    message = e.what();
  }
  CHECK(message.find("discriminator") != std::string::npos);
  CHECK(t.generator_updates() == 0);
}

TEST_CASE("overfitting a two-clip pair reduces recycle loss") {
  Stage2TrainSettings s;
  s.arch = tiny_config();
  // Adam moves a weight by at most ~lr per step; 300 steps at the default
  // 1e-4 cannot reshape a generator, so the overfit fixture runs at 1e-3.
  s.adam.learning_rate = 1e-3;
  Stage2Trainer t(s);
  const auto [human, anime] = toy_pair(3, 16);
  const DomainWindow hw = window(human, 0, 3), aw = window(anime, 0, 3);
  double at20 = 0.0, at300 = 0.0;
  for (int step = 0; step <= 300; ++step) {
    const Stage2StepReport r = t.train_step(hw, aw);
    if (step == 20) at20 = r.generator.at(Stage2Term::kRecycle);
    if (step == 300) at300 = r.generator.at(Stage2Term::kRecycle);
  }
  MESSAGE("recycle step 20: " << at20 << "  step 300: " << at300);
  CHECK(at300 <= 0.7 * at20);
}

TEST_CASE("stage-2 training checkpoints and resumes deterministically") {
  TempDir human_dir("s2_human"), anime_dir("s2_anime"), a("s2_a"), b("s2_b");
  toy::ToyClipOptions o;
  o.frames = 5;
  o.size = 16;
  o.with_audio = false;
  toy::write_toy_dataset(human_dir.path, 1, o);
  o.style = toy::FaceStyle::kAnime;
  toy::write_toy_dataset(anime_dir.path, 1, o);
  o.frames = 2;  // too short for a window
  toy::write_toy_clip(anime_dir.path / "clip_zz_short", toy::make_toy_clip(o));
  const DomainData data = load_domain_data(human_dir.path, anime_dir.path, 16, 2);
  CHECK(data.source.size() == 1);
  CHECK(data.target.size() == 1);
  CHECK(data.source[0].landmarks.has_value());

  Stage2TrainSettings s;
  s.arch = tiny_config();
  s.steps_per_epoch = 2;
  const Stage2Summary full = train_stage2(data, s, a.path);
  REQUIRE(full.checkpoints.size() == 3);
  for (const char* f : {"gen_s2t.bin", "gen_t2s.bin", "disc_t.bin", "disc_s.bin", "predictor_s.bin", "predictor_t.bin",
                        "state.txt"})
    CHECK(fs::exists(full.checkpoints.back() / f));
  CHECK(latest_stage2_checkpoint(a.path) == full.checkpoints.back());

  Stage2TrainSettings two = s;
  two.epochs = 2;
  train_stage2(data, two, b.path);
  train_stage2(data, s, b.path, true);
  CHECK(slurp(a.path / "loss_log.csv") == slurp(b.path / "loss_log.csv"));
  CHECK(slurp(a.path / "checkpoints/epoch_0003/gen_s2t.bin") == slurp(b.path / "checkpoints/epoch_0003/gen_s2t.bin"));

  const Stage2Model m = load_stage2_model(full.checkpoints.back(), s.arch);
  Stage2Config other = s.arch;
  other.residual_blocks = 1;
  CHECK_THROWS_AS(load_stage2_model(full.checkpoints.back(), other), ValidationError);

  o.frames = 1;
  o.size = 40;
  const auto frames = toy::make_toy_clip(o).clip.frames;
  const auto out = translate_to_target(m, frames);
  REQUIRE(out.size() == 1);
  CHECK(out[0].width == 16);
  CHECK(out[0].height == 16);
}
