#include "au2av/stage1/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <tuple>

#include "au2av/error.hpp"

namespace au2av::stage1 {

namespace fs = std::filesystem;
using ag::Var;

namespace {

ag::AdamSettings adam_settings(const OptimizerSettings& o) { return {o.learning_rate, o.beta1, o.beta2, 1e-8}; }

std::vector<Var> split_batch(const Var& x) {
  std::vector<Var> out;
  for (int i = 0; i < x.dim(0); ++i) out.push_back(ag::slice(x, 0, i, i + 1));
  return out;
}

/// Lower halves of the five frames around the middle of the batch.
std::vector<Var> sync_frames(const Var& frames) {
  const int b = frames.dim(0), h = frames.dim(2);
  if (b < SyncDiscriminator::kFrames) throw ValidationError("sync loss needs at least 5 frames per window");
  const int start = b / 2 - SyncDiscriminator::kFrames / 2;
  const Var lower = ag::slice(ag::slice(frames, 0, start, start + SyncDiscriminator::kFrames), 2, h / 2, h);
  return split_batch(lower);
}

void require_finite(const Var& v, const std::string& name) {
  if (!std::isfinite(v.item())) throw NumericError("non-finite " + name + " loss; step aborted");
}

const char* kNetworkFiles[] = {"generator", "frame_d", "temporal_d", "sync_d", "landmark_head"};

std::vector<ag::ParamStore*> stores(Stage1Model& m) {
  return {&m.generator_params, &m.frame_params, &m.temporal_params, &m.sync_params, &m.landmark_params};
}

void load_network(ag::ParamStore& dst, const fs::path& file, const std::string& expected_hash) {
  const ag::Archive a = ag::load_archive(file);
  auto it = a.header.find("config_hash");
  if (it == a.header.end() || it->second != expected_hash)
    throw ValidationError("checkpoint/config hash mismatch in " + file.string());
  dst.assign(a.tensors);
}

std::map<std::string, std::string> read_key_values(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot read " + file.string());
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(is, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void Stage1TrainSettings::validate() const {
  arch.validate();
  weights.validate();
  optimizer.validate();
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (phase_override < 0 || phase_override > 3) throw ValidationError("phase override must be 0..3");
  if (window_stride < 1) throw ValidationError("window stride must be >= 1");
  if (steps_per_epoch < 0 || sync_pretrain_steps < 0) throw ValidationError("step counts must be >= 0");
  if (stabilization.patience < 1 || !(stabilization.relative_epsilon > 0.0))
    throw ValidationError("stabilization needs patience >= 1 and epsilon > 0");
  if (arch.temporal_frames() < SyncDiscriminator::kFrames)
    throw ValidationError("training windows must hold at least the 5 sync frames (temporal_window >= 4)");
}

Stage1Trainer::Stage1Trainer(const Stage1TrainSettings& settings, std::shared_ptr<const FeatureProvider> features)
    : settings_((settings.validate(), settings)),
      features_(std::move(features)),
      model_(Stage1Model::create(settings.arch, settings.seed)),
      g_opt_(adam_settings(settings.optimizer)),
      fd_opt_(adam_settings(settings.optimizer)),
      td_opt_(adam_settings(settings.optimizer)),
      sd_opt_(adam_settings(settings.optimizer)),
      lm_opt_(adam_settings(settings.optimizer)) {
  if (!features_) throw ValidationError("a perceptual feature provider is required");
}

void Stage1Trainer::set_learning_rate(double lr) {
  for (ag::Adam* o : {&g_opt_, &fd_opt_, &td_opt_, &sd_opt_, &lm_opt_}) o->set_learning_rate(lr);
}

void Stage1Trainer::freeze_sync() {
  sync_frozen_ = true;
  model_.sync_params.set_trainable(false);
}

double Stage1Trainer::pretrain_sync_step(const Stage1Sample& genuine, const Stage1Sample& other) {
  if (sync_frozen_) throw ValidationError("sync discriminator is frozen");
  const std::vector<Var> halves = sync_frames(Var(genuine.frames));
  const SyncPair match = model_.sync_embed(halves, Var(genuine.sync_mfcc));
  const SyncPair mismatch = model_.sync_embed(halves, Var(other.sync_mfcc));
  const Var loss = contrastive_loss(ag::concat({match.video, mismatch.video}, 0),
                                    ag::concat({match.audio, mismatch.audio}, 0), {1.0, 0.0}, settings_.weights.margin);
  require_finite(loss, "sync pretraining");
  model_.sync_params.zero_grad();
  ag::backward(loss);
  sd_opt_.step(model_.sync_params);
  return loss.item();
}

StepReport Stage1Trainer::train_step(const Stage1Sample& batch) {
  const int phase = curriculum_.phase;
  const std::set<LossTerm> active = active_losses(phase);
  const bool temporal = active.count(LossTerm::kTemporal) != 0;
  const bool sync = active.count(LossTerm::kContrastive) != 0;
  const bool blink = active.count(LossTerm::kBlink) != 0;
  if (blink && !batch.landmarks) throw ValidationError("phase 3 batches must carry eye landmarks");
  if (temporal && batch.batch() != settings_.arch.temporal_frames())
    throw ValidationError("phase " + std::to_string(phase) + " batches must hold " +
                          std::to_string(settings_.arch.temporal_frames()) + " consecutive frames");
  const double res = settings_.arch.resolution;

  StepReport report;
  const Var identity(batch.identity);
  const Var real(batch.frames);
  const Var fake = model_.generate_frame(identity, model_.encode_speech(Var(batch.mfcc)));
  const Var fake_d = ag::detach(fake);
  report.lower_l1 = reconstruction_loss_lower(real, fake_d).item();

  // Discriminators.
  {
    model_.frame_params.zero_grad();
    model_.temporal_params.zero_grad();
    model_.sync_params.zero_grad();
    Var d_loss = adversarial_loss(model_.frame_discriminate(real, identity).scores,
                                  model_.frame_discriminate(fake_d, identity).scores, Side::kDiscriminator);
    if (temporal)
      d_loss = d_loss + temporal_adversarial_loss(model_.temporal_discriminate(split_batch(real)).scores,
                                                  model_.temporal_discriminate(split_batch(fake_d)).scores,
                                                  settings_.arch.temporal_window, Side::kDiscriminator);
    const bool sync_update = sync && settings_.sync_adversarial && !sync_frozen_;
    if (sync_update) {
      const SyncPair r = model_.sync_embed(sync_frames(real), Var(batch.sync_mfcc));
      const SyncPair f = model_.sync_embed(sync_frames(fake_d), Var(batch.sync_mfcc));
      d_loss = d_loss + contrastive_loss(ag::concat({r.video, f.video}, 0), ag::concat({r.audio, f.audio}, 0),
                                         {1.0, 0.0}, settings_.weights.margin);
    }
    require_finite(d_loss, "discriminator");
    ag::backward(d_loss);
    fd_opt_.step(model_.frame_params);
    if (temporal) td_opt_.step(model_.temporal_params);
    if (sync_update) sd_opt_.step(model_.sync_params);
    report.discriminator = d_loss.item();
    ++d_updates_;
  }

  // Landmark head follows the provider landmarks of the real frames.
  if (batch.landmarks) {
    model_.landmark_params.zero_grad();
    const Var target = ag::constant(*batch.landmarks);
    const Var lm_loss = ag::mean(ag::square((model_.predict_landmarks(real) - target) / res));
    require_finite(lm_loss, "landmark head");
    ag::backward(lm_loss);
    lm_opt_.step(model_.landmark_params);
    report.landmark = lm_loss.item();
  }

  // Generator, with every other network held fixed.
  for (ag::ParamStore* s : {&model_.frame_params, &model_.temporal_params, &model_.sync_params, &model_.landmark_params})
    s->set_trainable(false);
  try {
    model_.generator_params.zero_grad();
    LossBundle bundle;
    const DiscriminatorOutput fo = model_.frame_discriminate(fake, identity);
    const DiscriminatorOutput ro = model_.frame_discriminate(real, identity);
    bundle[LossTerm::kAdversarial] = adversarial_loss({}, fo.scores, Side::kGenerator);
    bundle[LossTerm::kFeatureMatching] = feature_matching_loss(ro.features, fo.features);
    bundle[LossTerm::kPerceptual] = perceptual_loss(real, fake, *features_);
    if (active.count(LossTerm::kReconstruction)) bundle[LossTerm::kReconstruction] = reconstruction_loss_lower(real, fake);
    if (temporal)
      bundle[LossTerm::kTemporal] = temporal_adversarial_loss({}, model_.temporal_discriminate(split_batch(fake)).scores,
                                                              settings_.arch.temporal_window, Side::kGenerator);
    if (sync) {
      const SyncPair p = model_.sync_embed(sync_frames(fake), Var(batch.sync_mfcc));
      bundle[LossTerm::kContrastive] = contrastive_loss(p.video, p.audio, {1.0}, settings_.weights.margin);
    }
    if (blink) {
      const Var ear_real = eye_aspect_ratio(ag::constant(*batch.landmarks));
      bundle[LossTerm::kBlink] = blink_loss(ear_real, eye_aspect_ratio(model_.predict_landmarks(fake)));
    }
    for (const auto& [term, value] : bundle) require_finite(value, loss_name(term));
    const Var objective = stage1_objective(bundle, settings_.weights, phase);
    require_finite(objective, "generator objective");
    ag::backward(objective);
    g_opt_.step(model_.generator_params);
    ++g_updates_;
    for (const auto& [term, value] : bundle) report.generator[term] = value.item();
  } catch (...) {
    for (ag::ParamStore* s : {&model_.frame_params, &model_.temporal_params, &model_.landmark_params})
      s->set_trainable(true);
    if (!sync_frozen_) model_.sync_params.set_trainable(true);
    throw;
  }
  for (ag::ParamStore* s : {&model_.frame_params, &model_.temporal_params, &model_.landmark_params})
    s->set_trainable(true);
  if (!sync_frozen_) model_.sync_params.set_trainable(true);
  return report;
}

void Stage1Trainer::save_checkpoint(const fs::path& dir) const {
  const fs::path tmp = dir.string() + ".tmp";
  try {
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    const std::string hash = settings_.arch.fingerprint();
    const ag::Header header{{"config_hash", hash},
                            {"step", std::to_string(g_updates_)},
                            {"epoch", std::to_string(curriculum_.epoch)}};
    auto& self = const_cast<Stage1Model&>(model_);
    const auto all = stores(self);
    const ag::Adam* opts[] = {&g_opt_, &fd_opt_, &td_opt_, &sd_opt_, &lm_opt_};
    for (std::size_t i = 0; i < all.size(); ++i) {
      ag::save_archive(tmp / (std::string(kNetworkFiles[i]) + ".bin"), *all[i], header);
      ag::save_archive(tmp / (std::string("optim_") + kNetworkFiles[i] + ".bin"), opts[i]->export_state(), header);
    }
    std::ofstream os(tmp / "state.txt");
    os << "config_hash=" << hash << '\n'
       << "seed=" << settings_.seed << '\n'
       << "sync_frozen=" << (sync_frozen_ ? 1 : 0) << '\n'
       << "discriminator_updates=" << d_updates_ << '\n'
       << "generator_updates=" << g_updates_ << '\n'
       << curriculum_.serialize();
    os.close();
    if (!os) throw IoError("failed writing " + (tmp / "state.txt").string());
    fs::remove_all(dir);
    fs::rename(tmp, dir);
  } catch (const fs::filesystem_error& e) {
    std::error_code ignored;
    fs::remove_all(tmp, ignored);
    throw IoError(std::string("checkpoint write failed: ") + e.what());
  } catch (...) {
    std::error_code ignored;
    fs::remove_all(tmp, ignored);
    throw;
  }
}

void Stage1Trainer::load_checkpoint(const fs::path& dir) {
  const std::string hash = settings_.arch.fingerprint();
  const auto all = stores(model_);
  ag::Adam* opts[] = {&g_opt_, &fd_opt_, &td_opt_, &sd_opt_, &lm_opt_};
  for (std::size_t i = 0; i < all.size(); ++i) {
    load_network(*all[i], dir / (std::string(kNetworkFiles[i]) + ".bin"), hash);
    opts[i]->import_state(ag::load_archive(dir / (std::string("optim_") + kNetworkFiles[i] + ".bin")).tensors);
  }
  const auto kv = read_key_values(dir / "state.txt");
  if (kv.count("config_hash") == 0 || kv.at("config_hash") != hash)
    throw ValidationError("checkpoint/config hash mismatch in " + dir.string());
  std::ifstream is(dir / "state.txt");
  std::stringstream ss;
  ss << is.rdbuf();
  curriculum_ = CurriculumState::parse(ss.str());
  d_updates_ = std::stol(kv.at("discriminator_updates"));
  g_updates_ = std::stol(kv.at("generator_updates"));
  if (kv.count("sync_frozen") && kv.at("sync_frozen") == "1") freeze_sync();
}

std::optional<fs::path> latest_checkpoint(const fs::path& out) {
  const fs::path root = out / "checkpoints";
  if (!fs::exists(root)) return std::nullopt;
  std::optional<fs::path> best;
  for (const auto& e : fs::directory_iterator(root)) {
    const std::string name = e.path().filename().string();
    if (!e.is_directory() || name.rfind("epoch_", 0) != 0 || name.find('.') != std::string::npos) continue;
    if (!best || name > best->filename().string()) best = e.path();
  }
  return best;
}

Stage1Model load_stage1_model(const fs::path& dir, const Stage1Config& expected) {
  Stage1Model m(expected);
  Stage1Model fresh = Stage1Model::create(expected, 0);  // parameter layout
  const auto dst = stores(m);
  const auto layout = stores(fresh);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    *dst[i] = layout[i]->clone();
    load_network(*dst[i], dir / (std::string(kNetworkFiles[i]) + ".bin"), expected.fingerprint());
  }
  return m;
}

TrainSummary train_stage1(const std::vector<Stage1Clip>& clips, const Stage1TrainSettings& settings,
                          std::shared_ptr<const FeatureProvider> features, const fs::path& out, bool resume) {
  settings.validate();
  if (clips.empty()) throw ValidationError("stage-1 training needs at least one clip");
  const int span = settings.arch.temporal_frames();
  std::vector<std::pair<int, int>> windows;  // (clip, start)
  for (int c = 0; c < static_cast<int>(clips.size()); ++c)
    for (int s = 0; s + span <= clips[c].frame_count(); s += settings.window_stride) windows.emplace_back(c, s);
  if (windows.empty()) throw ValidationError("no clip holds " + std::to_string(span) + " frames");

  Stage1Trainer trainer(settings, std::move(features));
  fs::create_directories(out / "checkpoints");
  const bool pinned = settings.phase_override != 0;
  if (resume) {
    const auto ck = latest_checkpoint(out);
    if (!ck) throw ValidationError("nothing to resume under " + out.string());
    trainer.load_checkpoint(*ck);
  } else {
    if (pinned) trainer.curriculum().advance_to(settings.phase_override);
    ag::Rng rng(settings.seed ^ 0x5eedULL);
    for (int i = 0; i < settings.sync_pretrain_steps; ++i) {
      const auto [c, s] = windows[rng() % windows.size()];
      auto [oc, os] = windows[rng() % windows.size()];
      if (windows.size() > 1)
        while (oc == c && os == s) std::tie(oc, os) = windows[rng() % windows.size()];
      trainer.pretrain_sync_step(clips[c].sample(s, span), clips[oc].sample(os, span));
    }
    if (!settings.sync_adversarial) trainer.freeze_sync();
  }

  const fs::path log_path = out / "loss_log.csv";
  const bool fresh_log = !resume || !fs::exists(log_path);
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write " + log_path.string());
  if (fresh_log) log << "epoch,phase,loss_name,value\n";
  log << std::setprecision(17);

  TrainSummary summary;
  for (int epoch = trainer.curriculum().epoch; epoch < settings.epochs; ++epoch) {
    trainer.set_learning_rate(std::max(lr_schedule(epoch, settings.optimizer), 1e-12));
    ag::Rng rng(static_cast<std::uint64_t>(settings.seed) * 7919ULL + static_cast<std::uint64_t>(epoch));
    std::vector<std::pair<int, int>> order = windows;
    std::shuffle(order.begin(), order.end(), rng);
    const int steps = settings.steps_per_epoch > 0 ? settings.steps_per_epoch : static_cast<int>(order.size());

    const int phase = trainer.curriculum().phase;
    std::map<LossTerm, double> sums;
    double d_sum = 0.0, l1_sum = 0.0;
    for (int i = 0; i < steps; ++i) {
      const auto [c, s] = order[i % order.size()];
      const StepReport r = trainer.train_step(clips[c].sample(s, span));
      for (const auto& [t, v] : r.generator) sums[t] += v;
      d_sum += r.discriminator;
      l1_sum += r.lower_l1;
    }
    std::map<LossTerm, double> means;
    for (const auto& [t, v] : sums) {
      means[t] = v / steps;
      log << epoch + 1 << ',' << phase << ',' << loss_name(t) << ',' << means[t] << '\n';
    }
    log << epoch + 1 << ',' << phase << ",discriminator," << d_sum / steps << '\n';
    log << epoch + 1 << ',' << phase << ",lower_l1," << l1_sum / steps << '\n';
    log.flush();
    trainer.curriculum().record_epoch(means, settings.stabilization, !pinned);
    summary.phases.push_back(phase);

    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d", epoch + 1);
    const fs::path dir = out / "checkpoints" / name;
    trainer.save_checkpoint(dir);
    summary.checkpoints.push_back(dir);
  }
  return summary;
}

AdaptResult one_shot_adapt(const Stage1Model& source, const ag::Tensor& identity, const FeatureProvider& features,
                           int epochs, const OptimizerSettings& optimizer) {
  if (epochs < 0) throw ValidationError("adaptation epochs must be >= 0");
  AdaptResult r{source.clone(), {}, 0, 0};
  ag::Adam opt(adam_settings(optimizer));
  const Var id(identity);
  const ag::Tensor silent = silence_mfcc();
  const Var mf(silent.reshaped({1, silent.dim(0), silent.dim(1)}));
  auto loss_fn = [&] { return perceptual_loss(id, r.model.generate_frame(id, r.model.encode_speech(mf)), features); };
  for (int k = 0; k < epochs; ++k) {
    r.model.generator_params.zero_grad();
    const Var loss = loss_fn();
    require_finite(loss, "adaptation perceptual");
    r.losses.push_back(loss.item());
    if (r.losses.back() > 10.0 * r.losses.front())
      throw NumericError("one-shot adaptation diverged: perceptual loss " + std::to_string(r.losses.back()) +
                         " vs initial " + std::to_string(r.losses.front()));
    ag::backward(loss);
    opt.step(r.model.generator_params);
    ++r.generator_passes;
  }
  const Var final_loss = loss_fn();
  require_finite(final_loss, "adaptation perceptual");
  r.losses.push_back(final_loss.item());
  if (epochs > 0 && r.losses.back() > 10.0 * r.losses.front())
    throw NumericError("one-shot adaptation diverged after " + std::to_string(epochs) + " passes");
  return r;
}

}  // namespace au2av::stage1
