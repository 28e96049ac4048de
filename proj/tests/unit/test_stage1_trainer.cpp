#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "au2av/error.hpp"
#include "au2av/media/toy_data.hpp"
#include "au2av/stage1/trainer.hpp"
#include "tempdir.hpp"

using namespace au2av;
using namespace au2av::stage1;
using au2av::testing::TempDir;
namespace fs = std::filesystem;

namespace {

Stage1Config tiny_arch(int resolution = 16) {
  Stage1Config c;
  c.resolution = resolution;
  c.embedding_dim = 8;
  c.encoder_channels = 2;
  c.encoder_hidden = 4;
  c.generator_width = 8;
  c.generator_min_width = 4;
  c.modulation_hidden = 4;
  c.disc_width = 4;
  c.sync_resolution = 16;
  c.sync_width = 2;
  c.sync_dim = 8;
  c.landmark_width = 2;
  return c;
}

Stage1TrainSettings tiny_settings() {
  Stage1TrainSettings s;
  s.arch = tiny_arch();
  s.epochs = 3;
  s.steps_per_epoch = 3;
  s.sync_pretrain_steps = 2;
  return s;
}

std::shared_ptr<const FeatureProvider> features() { return std::make_shared<RandomConvFeatureProvider>(19, 4); }

Stage1Clip toy_clip(int frames, int resolution, unsigned seed = 3) {
  toy::ToyClipOptions o;
  o.frames = frames;
  o.size = resolution;
  o.seed = seed;
  o.blink_frames = {2};
  const toy::ToyClip t = toy::make_toy_clip(o);
  return make_stage1_clip("toy", t.clip, resolution, t.landmarks);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of_epoch(const std::string& log, int epoch) {
  std::vector<std::string> out;
  std::istringstream is(log);
  const std::string prefix = std::to_string(epoch) + ",";
  for (std::string line; std::getline(is, line);)
    if (line.rfind(prefix, 0) == 0) out.push_back(line);
  return out;
}

class NanFeatures final : public FeatureProvider {
 public:
  std::string name() const override { return "nan"; }
  std::vector<ag::Var> features(const ag::Var& images) const override {
    return {images * std::numeric_limits<double>::quiet_NaN()};
  }
};

// Steep features: any generated pixel driven bright dominates the loss.
class ExpFeatures final : public FeatureProvider {
 public:
  std::string name() const override { return "exp"; }
  std::vector<ag::Var> features(const ag::Var& images) const override { return {ag::exp(images * 20.0)}; }
};

// Mean first difference over the last p steps, written out term by term.
double slope_oracle(const std::vector<double>& h, int p) {
  double acc = 0.0;
  for (int i = 0; i < p; ++i) acc += h[h.size() - 1 - i] - h[h.size() - 2 - i];
  return acc / p;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const OptimizerSettings d;
  CHECK(lr_schedule(0, d) == 0.002);
  CHECK(lr_schedule(49, d) == 0.002);
  CHECK(lr_schedule(50, d) == 0.002);
  CHECK(lr_schedule(100, d) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_schedule(150, d) == 0.0);
  CHECK(lr_schedule(400, d) == 0.0);
  for (int e = 50; e < 150; ++e) CHECK(lr_schedule(e + 1, d) <= lr_schedule(e, d));
  CHECK_THROWS_AS(lr_schedule(-1, d), ValidationError);

  OptimizerSettings bad;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("stabilization rule") {
  const double eps = 0.01;
  const int patience = 5;
  CHECK(stabilization_check(std::vector<double>(8, 3.0), eps, patience));

  std::vector<double> falling;
  for (int i = 0; i < 8; ++i) falling.push_back(5.0 - 10.0 * eps * i);
  CHECK_FALSE(stabilization_check(falling, eps, patience));
  CHECK(moving_average_slope(falling, patience) == doctest::Approx(-10.0 * eps).epsilon(1e-12));

  // Too short to judge.
  CHECK_FALSE(stabilization_check(std::vector<double>(4, 3.0), eps, patience));

  std::mt19937_64 rng(11);
  const double amplitude = 0.99 * eps * patience / 2.0;
  std::uniform_real_distribution<double> noise(-amplitude, amplitude);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> h;
    for (int i = 0; i < 12; ++i) h.push_back(2.0 + noise(rng));
    const double slope = moving_average_slope(h, patience);
    CHECK(slope == doctest::Approx(slope_oracle(h, patience)).epsilon(1e-12));
    CHECK(std::abs(slope) < eps);
    CHECK(stabilization_check(h, eps, patience));
  }
}

TEST_CASE("scripted curriculum fires exactly when the rule is met") {
  StabilizationSettings st;
  CurriculumState c;
  // Phase-1 losses decay geometrically, then flatten after epoch 6.
  auto value = [](int e, double base) { return e < 6 ? base * std::pow(0.5, e) : base * std::pow(0.5, 6); };
  std::vector<int> transitions;
  std::map<std::string, std::vector<double>> replay;
  for (int e = 0; e < 40 && c.phase < 3; ++e) {
    std::map<LossTerm, double> means;
    for (LossTerm t : all_loss_terms()) means[t] = value(e - static_cast<int>(transitions.empty() ? 0 : transitions.back()), 1.0 + static_cast<int>(t));
    // Oracle: would every active history, extended by this epoch, pass the rule?
    bool expect = c.phase < 3;
    for (LossTerm t : c.active()) {
      auto h = replay[loss_name(t)];
      h.push_back(means[t]);
      replay[loss_name(t)] = h;
      const int n = static_cast<int>(h.size());
      if (n < st.patience) {
        expect = false;
        continue;
      }
      double mean = 0.0;
      for (int i = n - st.patience; i < n; ++i) mean += h[i];
      mean /= st.patience;
      if (!(std::abs(slope_oracle(h, st.patience)) < st.relative_epsilon * std::abs(mean))) expect = false;
    }
    const bool fired = c.record_epoch(means, st);
    CHECK(fired == expect);
    if (fired) {
      transitions.push_back(e + 1);
      replay.clear();
    }
  }
  REQUIRE(transitions.size() == 2);
  // Flat from relative epoch 6, so patience 5 needs relative epochs 6..11 -> 12 records.
  CHECK(transitions[0] == 12);
  CHECK(transitions[1] == 24);
  CHECK(c.phase == 3);
  for (std::size_t i = 1; i < c.phase_by_epoch.size(); ++i) CHECK(c.phase_by_epoch[i] >= c.phase_by_epoch[i - 1]);

  const CurriculumState back = CurriculumState::parse(c.serialize());
  CHECK(back.phase == c.phase);
  CHECK(back.epoch == c.epoch);
  CHECK(back.phase_by_epoch == c.phase_by_epoch);
  CHECK(back.loss_history == c.loss_history);

  CHECK_THROWS_AS(c.advance_to(2), ValidationError);
  CurriculumState pinned;
  for (int e = 0; e < 10; ++e) CHECK_FALSE(pinned.record_epoch({{LossTerm::kAdversarial, 1.0}, {LossTerm::kFeatureMatching, 1.0}, {LossTerm::kPerceptual, 1.0}}, st, false));
  CHECK(pinned.phase == 1);
  CHECK_THROWS_AS(pinned.record_epoch({{LossTerm::kAdversarial, 1.0}}, st), ValidationError);
}

TEST_CASE("train step gating and preconditions") {
  Stage1TrainSettings s = tiny_settings();
  const Stage1Clip clip = toy_clip(5, 16);
  Stage1Sample with = clip.sample(0, 5);
  Stage1Sample without = with;
  without.landmarks.reset();

  Stage1Trainer t(s, features());
  const StepReport r1 = t.train_step(without);
  CHECK(r1.generator.size() == 3);
  for (LossTerm term : {LossTerm::kAdversarial, LossTerm::kFeatureMatching, LossTerm::kPerceptual})
    CHECK(r1.generator.count(term) == 1);
  CHECK(std::isfinite(r1.discriminator));
  CHECK(t.discriminator_updates() == 1);
  CHECK(t.generator_updates() == 1);

  t.curriculum().advance_to(2);
  const StepReport r2 = t.train_step(without);
  CHECK(r2.generator.size() == 6);
  CHECK(r2.generator.count(LossTerm::kBlink) == 0);
  CHECK(r2.generator.count(LossTerm::kTemporal) == 1);

  t.curriculum().advance_to(3);
  CHECK_THROWS_AS(t.train_step(without), ValidationError);
  const StepReport r3 = t.train_step(with);
  CHECK(r3.generator.size() == 7);
  for (const auto& [term, v] : r3.generator) CHECK(std::isfinite(v));
  CHECK(r3.landmark > 0.0);

  // Temporal phases need exactly L+1 frames.
  CHECK_THROWS_AS(t.train_step(toy_clip(6, 16).sample(0, 6)), ValidationError);
}

TEST_CASE("generator update leaves the discriminators alone") {
  Stage1Trainer t(tiny_settings(), features());
  t.freeze_sync();
  const Stage1Sample b = toy_clip(5, 16).sample(0, 5);
  const ag::ParamStore sync_before = t.model().sync_params.clone();
  const ag::ParamStore lm_before = t.model().landmark_params.clone();
  t.curriculum().advance_to(2);
  Stage1Sample no_lm = b;
  no_lm.landmarks.reset();
  t.train_step(no_lm);
  CHECK(t.model().sync_params.same_values(sync_before));
  CHECK(t.model().landmark_params.same_values(lm_before));
  CHECK_THROWS_AS(t.pretrain_sync_step(b, b), ValidationError);
}

TEST_CASE("a non-finite loss aborts the step and names it") {
  Stage1Trainer t(tiny_settings(), std::make_shared<NanFeatures>());
  const ag::ParamStore before = t.model().generator_params.clone();
  std::string message;
  try {
    t.train_step(toy_clip(5, 16).sample(0, 5));
  } catch (const NumericError& e) {
    message = e.what();
  }
  CHECK(message.find("perceptual") != std::string::npos);
  CHECK(t.model().generator_params.same_values(before));
  CHECK(t.generator_updates() == 0);
  // The sync store is still trainable after the aborted update.
  Stage1Trainer ok(tiny_settings(), features());
  const auto b = toy_clip(5, 16).sample(0, 5);
  CHECK(std::isfinite(ok.pretrain_sync_step(b, b)));
}

TEST_CASE("sync pretraining separates genuine from shifted audio") {
  Stage1Trainer t(tiny_settings(), features());
  const Stage1Clip clip = toy_clip(30, 16);
  const Stage1Sample genuine = clip.sample(0, 5);
  const Stage1Sample other = clip.sample(20, 5);
  const double first = t.pretrain_sync_step(genuine, other);
  double last = first;
  for (int i = 0; i < 30; ++i) last = t.pretrain_sync_step(genuine, other);
  CHECK(last < first);
}

TEST_CASE("overfitting one five-frame clip halves the lower-half error") {
  Stage1TrainSettings s;
  s.arch = tiny_arch(32);
  s.arch.embedding_dim = 16;
  s.arch.encoder_channels = 4;
  s.arch.encoder_hidden = 8;
  s.arch.generator_width = 16;
  s.arch.generator_min_width = 8;
  s.arch.modulation_hidden = 8;
  s.arch.disc_width = 8;
  s.arch.sync_width = 4;
  s.arch.sync_dim = 16;
  s.arch.landmark_width = 4;
  Stage1Trainer t(s, std::make_shared<RandomConvFeatureProvider>());
  t.curriculum().advance_to(2);
  t.freeze_sync();
  const Stage1Sample pair = toy_clip(5, 32).sample(0, 5);
  double at10 = 0.0, at200 = 0.0;
  for (int step = 0; step <= 200; ++step) {
    const StepReport r = t.train_step(pair);
    if (step == 10) at10 = r.lower_l1;
    if (step == 200) at200 = r.lower_l1;
  }
  MESSAGE("lower-half L1 step 10: " << at10 << "  step 200: " << at200);
  CHECK(at200 <= 0.5 * at10);
}

TEST_CASE("training emits checkpoints, resumes deterministically and logs bit-identically") {
  TempDir data("s1_data");
  toy::ToyClipOptions o;
  o.frames = 15;
  o.size = 16;
  o.blink_frames = {4};
  toy::write_toy_dataset(data.path, 2, o);
  const auto clips = load_stage1_dataset(data.path, 16);
  REQUIRE(clips.size() == 2);
  REQUIRE(clips[0].landmarks.has_value());

  const Stage1TrainSettings s = tiny_settings();
  TempDir a("s1_run_a"), b("s1_run_b"), c("s1_run_c");
  const TrainSummary sa = train_stage1(clips, s, features(), a.path);
  REQUIRE(sa.checkpoints.size() == 3);
  for (int i = 0; i < 3; ++i) {
    char expected[16];
    std::snprintf(expected, sizeof expected, "epoch_%04d", i + 1);
    CHECK(sa.checkpoints[i].filename() == expected);
    for (const char* f : {"generator.bin", "frame_d.bin", "temporal_d.bin", "sync_d.bin", "state.txt"})
      CHECK(fs::exists(sa.checkpoints[i] / f));
  }
  CHECK(latest_checkpoint(a.path) == sa.checkpoints.back());
  for (const auto& e : fs::directory_iterator(a.path / "checkpoints"))
    CHECK(e.path().filename().string().find(".tmp") == std::string::npos);

  // Same seed, same config: identical bytes.
  train_stage1(clips, s, features(), b.path);
  const std::string log_a = slurp(a.path / "loss_log.csv");
  CHECK(log_a == slurp(b.path / "loss_log.csv"));
  CHECK(lines_of_epoch(log_a, 3).size() >= 5);

  // Two epochs, then resume to three.
  Stage1TrainSettings shorter = s;
  shorter.epochs = 2;
  train_stage1(clips, shorter, features(), c.path);
  const TrainSummary resumed = train_stage1(clips, s, features(), c.path, true);
  REQUIRE(resumed.checkpoints.size() == 1);
  CHECK(lines_of_epoch(slurp(c.path / "loss_log.csv"), 3) == lines_of_epoch(log_a, 3));
  CHECK(slurp(c.path / "checkpoints/epoch_0003/generator.bin") == slurp(a.path / "checkpoints/epoch_0003/generator.bin"));

  // Recorded phases replay from the logged means.
  const auto state = CurriculumState::parse(slurp(sa.checkpoints.back() / "state.txt"));
  CHECK(state.epoch == 3);
  CHECK(state.phase_by_epoch == sa.phases);
  CurriculumState replay;
  for (int e = 1; e <= 3; ++e) {
    std::map<LossTerm, double> means;
    for (const std::string& line : lines_of_epoch(log_a, e)) {
      std::istringstream is(line);
      std::string ep, ph, name, value;
      std::getline(is, ep, ',');
      std::getline(is, ph, ',');
      std::getline(is, name, ',');
      std::getline(is, value);
      CHECK(std::stoi(ph) == replay.phase);
      for (LossTerm t : all_loss_terms())
        if (loss_name(t) == name) means[t] = std::stod(value);
    }
    replay.record_epoch(means, s.stabilization);
  }
  CHECK(replay.phase == state.phase);
  CHECK(replay.phase_by_epoch == state.phase_by_epoch);

  // Loading under a different architecture is refused.
  Stage1Config other = s.arch;
  other.generator_width = 16;
  CHECK_THROWS_AS(load_stage1_model(sa.checkpoints.back(), other), ValidationError);
  const Stage1Model loaded = load_stage1_model(sa.checkpoints.back(), s.arch);
  CHECK(loaded.generator_params.size() > 0);

  CHECK_THROWS_AS(train_stage1(clips, s, features(), data.path / "nowhere", true), ValidationError);
}

TEST_CASE("pinned phase holds for the whole run") {
  TempDir out("s1_pinned");
  std::vector<Stage1Clip> clips{toy_clip(10, 16)};
  Stage1TrainSettings s = tiny_settings();
  s.phase_override = 3;
  s.epochs = 2;
  const TrainSummary r = train_stage1(clips, s, features(), out.path);
  CHECK(r.phases == std::vector<int>{3, 3});
}

TEST_CASE("one-shot adaptation") {
  TempDir out("s1_adapt");
  Stage1Trainer t(tiny_settings(), features());
  const fs::path ck = out.path / "epoch_0001";
  t.save_checkpoint(ck);
  const std::string file_before = slurp(ck / "generator.bin");

  const Stage1Model source = load_stage1_model(ck, t.settings().arch);
  const ag::ParamStore source_before = source.generator_params.clone();
  toy::ToyClipOptions o;
  o.size = 16;
  o.seed = 9;
  o.frames = 1;
  o.with_audio = false;
  const ag::Tensor identity = identity_tensor(toy::make_toy_clip(o).clip.frames[0], 16);
  const RandomConvFeatureProvider pf(19, 4);

  const AdaptResult none = one_shot_adapt(source, identity, pf, 0);
  CHECK(none.model.generator_params.same_values(source.generator_params));
  CHECK(none.generator_passes == 0);
  CHECK(none.losses.size() == 1);

  const AdaptResult five = one_shot_adapt(source, identity, pf);
  CHECK(five.generator_passes == 5);
  CHECK(five.discriminator_updates == 0);
  REQUIRE(five.losses.size() == 6);
  CHECK(five.losses[5] <= five.losses[0]);
  CHECK_FALSE(five.model.generator_params.same_values(source.generator_params));
  CHECK(source.generator_params.same_values(source_before));
  CHECK(five.model.frame_params.same_values(source.frame_params));
  CHECK(slurp(ck / "generator.bin") == file_before);

  // Same inputs, same result.
  const AdaptResult again = one_shot_adapt(source, identity, pf);
  CHECK(again.losses == five.losses);

  OptimizerSettings wild;
  wild.learning_rate = 50.0;
  const ag::Tensor dark({1, 3, 16, 16}, -1.0);
  CHECK_THROWS_AS(one_shot_adapt(source, dark, ExpFeatures(), 5, wild), NumericError);
  CHECK_THROWS_AS(one_shot_adapt(source, identity, pf, -1), ValidationError);
}
