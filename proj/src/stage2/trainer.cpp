#include "au2av/stage2/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "au2av/autograd/archive.hpp"
#include "au2av/error.hpp"
#include "au2av/media/streams.hpp"

namespace au2av::stage2 {

namespace fs = std::filesystem;
using ag::Var;

namespace {

ag::Tensor rows(const ag::Tensor& t, int start, int count) {
  ag::Shape s = t.shape();
  const std::size_t per = t.numel() / s[0];
  s[0] = count;
  const auto& src = t.storage();
  return ag::Tensor(s, std::vector<double>(src.begin() + start * per, src.begin() + (start + count) * per));
}

std::vector<Var> split(const Var& x) {
  std::vector<Var> out;
  for (int i = 0; i < x.dim(0); ++i) out.push_back(ag::slice(x, 0, i, i + 1));
  return out;
}

void require_finite(const Var& v, const std::string& what) {
  if (!std::isfinite(v.item())) throw NumericError("non-finite " + what + " loss; step aborted");
}

std::optional<std::vector<FaceLandmarks>> sidecar_landmarks(const fs::path& dir) {
  const fs::path manifest = dir / media::kManifestName;
  if (!fs::exists(manifest)) return std::nullopt;
  const media::ClipManifest m = media::ClipManifest::read(manifest);
  auto it = m.extra.find("landmarks_path");
  if (it == m.extra.end()) return std::nullopt;
  return TableLandmarkProvider::from_file(dir / it->second).table();
}

/// Holds a set of stores fixed for the lifetime of the guard.
class Freeze {
 public:
  explicit Freeze(std::vector<ag::ParamStore*> stores) : stores_(std::move(stores)) {
    for (auto* s : stores_) s->set_trainable(false);
  }
  ~Freeze() {
    for (auto* s : stores_) s->set_trainable(true);
  }
  Freeze(const Freeze&) = delete;
  Freeze& operator=(const Freeze&) = delete;

 private:
  std::vector<ag::ParamStore*> stores_;
};

void load_network(ag::ParamStore& dst, const fs::path& file, const std::string& hash) {
  const ag::Archive a = ag::load_archive(file);
  auto it = a.header.find("config_hash");
  if (it == a.header.end() || it->second != hash) throw ValidationError("checkpoint/config hash mismatch in " + file.string());
  dst.assign(a.tensors);
}

}  // namespace

DomainWindow window(const DomainClip& clip, int start, int count) {
  if (start < 0 || count < 1 || start + count > clip.frame_count())
    throw ValidationError("window outside clip " + clip.name);
  DomainWindow w;
  w.frames = rows(clip.frames, start, count);
  if (clip.landmarks) w.landmarks = rows(*clip.landmarks, start, count);
  return w;
}

DomainClip make_domain_clip(const std::string& name, const media::TalkingClip& clip, int resolution,
                            const std::optional<std::vector<FaceLandmarks>>& landmarks) {
  clip.validate();
  if (clip.frames.empty()) throw ValidationError("clip " + name + " has no frames");
  DomainClip out;
  out.name = name;
  std::vector<media::Image> frames;
  for (const auto& f : clip.frames)
    frames.push_back(f.height == resolution && f.width == resolution ? f : media::resize_area(f, resolution, resolution));
  out.frames = media::images_to_tensor(frames, true);
  if (landmarks) {
    if (landmarks->size() < clip.frames.size()) throw ValidationError("clip " + name + ": fewer landmark rows than frames");
    const double sx = static_cast<double>(resolution) / clip.width();
    const double sy = static_cast<double>(resolution) / clip.height();
    std::vector<FaceLandmarks> scaled(landmarks->begin(), landmarks->begin() + clip.frames.size());
    for (auto& f : scaled)
      for (auto* eye : {&f.left, &f.right})
        for (auto& p : eye->p) p = {p.x * sx, p.y * sy};
    out.landmarks = stage1::landmarks_to_tensor(scaled);
  }
  return out;
}

DomainData load_domain_data(const fs::path& source_dir, const fs::path& target_dir, int resolution, int past) {
  const media::UnpairedStreams streams = media::make_unpaired_streams(source_dir, target_dir, past);
  DomainData data;
  for (const auto& [from, to] : {std::pair{&streams.source, &data.source}, std::pair{&streams.target, &data.target}})
    for (const auto& sc : *from)
      if (sc.temporal_ok)
        to->push_back(make_domain_clip(sc.source.filename().string(), sc.clip, resolution, sidecar_landmarks(sc.source)));
  if (data.source.empty() || data.target.empty())
    throw ValidationError("each domain needs a clip with at least " + std::to_string(past + 1) + " frames");
  return data;
}

void Stage2TrainSettings::validate() const {
  arch.validate();
  weights.validate();
  if (!(adam.learning_rate > 0.0) || adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0)
    throw ValidationError("stage-2 optimizer needs lr > 0 and betas in [0, 1)");
  if (epochs < 0 || steps_per_epoch < 0) throw ValidationError("epoch and step counts must be >= 0");
}

Stage2Trainer::Stage2Trainer(const Stage2TrainSettings& settings)
    : settings_((settings.validate(), settings)), model_(Stage2Model::create(settings.arch, settings.seed)) {
  for (std::size_t i = 0; i < model_.stores().size(); ++i) opts_.emplace_back(settings_.adam);
}

Stage2StepReport Stage2Trainer::train_step(const DomainWindow& source, const DomainWindow& target) {
  const int past = settings_.arch.past_frames;
  if (source.frames.dim(0) != past + 1 || target.frames.dim(0) != past + 1)
    throw ValidationError("stage-2 windows must hold exactly " + std::to_string(past + 1) + " frames");
  Stage2Model& m = model_;
  const auto stores = m.stores();
  auto step = [&](ag::ParamStore& s) {
    for (std::size_t i = 0; i < stores.size(); ++i)
      if (stores[i].second == &s) opts_[i].step(s);
  };
  const Var x(source.frames), y(target.frames);
  const std::vector<Var> xs = split(x), ys = split(y);
  Stage2StepReport report;

  // Discriminators on detached translations.
  {
    const Var fake_t = ag::detach(m.to_target(x).frame);
    const Var fake_s = ag::detach(m.to_source(y).frame);
    const Stage2DiscOutput dt_real = m.disc_t(m.disc_t_params, y), dt_fake = m.disc_t(m.disc_t_params, fake_t);
    const Stage2DiscOutput ds_real = m.disc_s(m.disc_s_params, x), ds_fake = m.disc_s(m.disc_s_params, fake_s);
    Var d_loss = lsgan_loss(head_scores(dt_real), head_scores(dt_fake), Side::kDiscriminator) +
                 lsgan_loss(head_scores(ds_real), head_scores(ds_fake), Side::kDiscriminator);
    Var d_cam = ag::scalar(0.0);
    for (int h = 0; h < 2; ++h) {
      d_cam = d_cam + cam_loss(head_cam_logits(dt_real)[h], head_cam_logits(dt_fake)[h]) +
              cam_loss(head_cam_logits(ds_real)[h], head_cam_logits(ds_fake)[h]);
    }
    if (settings_.weights.cam != 0.0) d_loss = d_loss + d_cam * settings_.weights.cam;
    require_finite(d_loss, "discriminator");
    m.disc_t_params.zero_grad();
    m.disc_s_params.zero_grad();
    ag::backward(d_loss);
    step(m.disc_t_params);
    step(m.disc_s_params);
    report.discriminator = d_loss.item();
  }

  // Predictors on real frames of their own domain.
  {
    const Var p_loss = predictor_loss(xs, past, [&](const std::vector<Var>& w) { return m.predict_source(w); }) +
                       predictor_loss(ys, past, [&](const std::vector<Var>& w) { return m.predict_target(w); });
    require_finite(p_loss, "predictor");
    m.predictor_s_params.zero_grad();
    m.predictor_t_params.zero_grad();
    ag::backward(p_loss);
    step(m.predictor_s_params);
    step(m.predictor_t_params);
    report.generator[Stage2Term::kPredictor] = p_loss.item();
  }

  // Landmark head on whichever windows carry provider landmarks.
  {
    std::vector<Var> terms;
    const double res = settings_.arch.resolution;
    for (const auto* w : {&source, &target})
      if (w->landmarks)
        terms.push_back(ag::mean(ag::square(
            (m.landmark_head(m.landmark_params, Var(w->frames)) - ag::constant(*w->landmarks)) / res)));
    if (!terms.empty()) {
      Var lm = terms[0];
      for (std::size_t i = 1; i < terms.size(); ++i) lm = lm + terms[i];
      require_finite(lm, "landmark head");
      m.landmark_params.zero_grad();
      ag::backward(lm);
      step(m.landmark_params);
      report.landmark = lm.item();
    }
  }

  // Generators against fixed discriminators, predictors and landmark head.
  {
    Freeze frozen({&m.disc_t_params, &m.disc_s_params, &m.predictor_s_params, &m.predictor_t_params, &m.landmark_params});
    const auto to_t = m.to_target(x);   // source inputs of G_s2t
    const auto to_s = m.to_source(y);   // source inputs of G_t2s
    const auto t_of_t = m.to_target(y); // target inputs of G_s2t
    const auto s_of_s = m.to_source(x); // target inputs of G_t2s

    Stage2Bundle b;
    const Stage2DiscOutput dt = m.disc_t(m.disc_t_params, to_t.frame);
    const Stage2DiscOutput ds = m.disc_s(m.disc_s_params, to_s.frame);
    b[Stage2Term::kAdversarial] = lsgan_loss({}, head_scores(dt), Side::kGenerator) +
                                  lsgan_loss({}, head_scores(ds), Side::kGenerator) +
                                  cam_adversarial_loss(head_cam_logits(dt)) + cam_adversarial_loss(head_cam_logits(ds));
    b[Stage2Term::kCam] = cam_loss(to_t.cam_logit, t_of_t.cam_logit) + cam_loss(to_s.cam_logit, s_of_s.cam_logit);
    b[Stage2Term::kIdentity] = settings_.literal_identity
                                   ? identity_loss(x, to_t.frame) + identity_loss(y, to_s.frame)
                                   : identity_loss(y, t_of_t.frame) + identity_loss(x, s_of_s.frame);
    const FrameMap s2t = [&](const Var& v) { return m.to_target(v).frame; };
    const FrameMap t2s = [&](const Var& v) { return m.to_source(v).frame; };
    b[Stage2Term::kRecycle] =
        recycle_loss(xs, past, s2t, [&](const std::vector<Var>& w) { return m.predict_target(w); }, t2s) +
        recycle_loss(ys, past, t2s, [&](const std::vector<Var>& w) { return m.predict_source(w); }, s2t);
    const Var cycled = m.to_source(to_t.frame).frame;
    b[Stage2Term::kLipSync] = lip_sync_loss(x, cycled);
    b[Stage2Term::kBlink] = stage2_blink_loss(ag::detach(m.landmark_head(m.landmark_params, x)),
                                              m.landmark_head(m.landmark_params, cycled));
    for (const auto& [t, v] : b) require_finite(v, term_name(t));
    const Var objective = stage2_objective(b, settings_.weights);
    require_finite(objective, "generator objective");
    m.gen_s2t_params.zero_grad();
    m.gen_t2s_params.zero_grad();
    ag::backward(objective);
    step(m.gen_s2t_params);
    step(m.gen_t2s_params);
    clip_rho(m.gen_s2t_params);
    clip_rho(m.gen_t2s_params);
    for (const auto& [t, v] : b) report.generator[t] = v.item();
    ++g_updates_;
  }
  return report;
}

void Stage2Trainer::save_checkpoint(const fs::path& dir) const {
  const fs::path tmp = dir.string() + ".tmp";
  try {
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    const std::string hash = settings_.arch.fingerprint();
    const ag::Header header{{"config_hash", hash}, {"step", std::to_string(g_updates_)}, {"epoch", std::to_string(epoch_)}};
    const auto stores = const_cast<Stage2Model&>(model_).stores();
    for (std::size_t i = 0; i < stores.size(); ++i) {
      ag::save_archive(tmp / (stores[i].first + ".bin"), *stores[i].second, header);
      ag::save_archive(tmp / ("optim_" + stores[i].first + ".bin"), opts_[i].export_state(), header);
    }
    std::ofstream os(tmp / "state.txt");
    os << "config_hash=" << hash << '\n'
       << "seed=" << settings_.seed << '\n'
       << "epoch=" << epoch_ << '\n'
       << "generator_updates=" << g_updates_ << '\n';
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

void Stage2Trainer::load_checkpoint(const fs::path& dir) {
  const std::string hash = settings_.arch.fingerprint();
  const auto stores = model_.stores();
  for (std::size_t i = 0; i < stores.size(); ++i) {
    load_network(*stores[i].second, dir / (stores[i].first + ".bin"), hash);
    opts_[i].import_state(ag::load_archive(dir / ("optim_" + stores[i].first + ".bin")).tensors);
  }
  std::ifstream is(dir / "state.txt");
  if (!is) throw IoError("cannot read " + (dir / "state.txt").string());
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(is, line);)
    if (auto eq = line.find('='); eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  if (kv["config_hash"] != hash) throw ValidationError("checkpoint/config hash mismatch in " + dir.string());
  epoch_ = std::stoi(kv.at("epoch"));
  g_updates_ = std::stol(kv.at("generator_updates"));
}

std::optional<fs::path> latest_stage2_checkpoint(const fs::path& out) {
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

Stage2Model load_stage2_model(const fs::path& dir, const Stage2Config& expected) {
  Stage2Model m = Stage2Model::create(expected, 0);
  for (auto& [name, store] : m.stores()) load_network(*store, dir / (name + ".bin"), expected.fingerprint());
  return m;
}

Stage2Summary train_stage2(const DomainData& data, const Stage2TrainSettings& settings, const fs::path& out,
                           bool resume) {
  settings.validate();
  const int span = settings.arch.past_frames + 1;
  auto windows_of = [&](const std::vector<DomainClip>& clips) {
    std::vector<std::pair<int, int>> w;
    for (int c = 0; c < static_cast<int>(clips.size()); ++c)
      for (int s = 0; s + span <= clips[c].frame_count(); ++s) w.emplace_back(c, s);
    return w;
  };
  const auto src_windows = windows_of(data.source), tgt_windows = windows_of(data.target);
  if (src_windows.empty() || tgt_windows.empty())
    throw ValidationError("each domain needs a clip with at least " + std::to_string(span) + " frames");

  Stage2Trainer trainer(settings);
  fs::create_directories(out / "checkpoints");
  if (resume) {
    const auto ck = latest_stage2_checkpoint(out);
    if (!ck) throw ValidationError("nothing to resume under " + out.string());
    trainer.load_checkpoint(*ck);
  }
  const fs::path log_path = out / "loss_log.csv";
  const bool fresh_log = !resume || !fs::exists(log_path);
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write " + log_path.string());
  if (fresh_log) log << "epoch,phase,loss_name,value\n";
  log << std::setprecision(17);

  Stage2Summary summary;
  const int steps = settings.steps_per_epoch > 0 ? settings.steps_per_epoch
                                                 : static_cast<int>(std::max(src_windows.size(), tgt_windows.size()));
  for (int epoch = trainer.epoch(); epoch < settings.epochs; ++epoch) {
    ag::Rng rng(static_cast<std::uint64_t>(settings.seed) * 104729ULL + static_cast<std::uint64_t>(epoch));
    auto src = src_windows, tgt = tgt_windows;
    std::shuffle(src.begin(), src.end(), rng);
    std::shuffle(tgt.begin(), tgt.end(), rng);
    std::map<Stage2Term, double> sums;
    double d_sum = 0.0;
    for (int i = 0; i < steps; ++i) {
      const auto [sc, ss] = src[i % src.size()];
      const auto [tc, ts] = tgt[i % tgt.size()];
      const Stage2StepReport r = trainer.train_step(window(data.source[sc], ss, span), window(data.target[tc], ts, span));
      for (const auto& [t, v] : r.generator) sums[t] += v;
      d_sum += r.discriminator;
    }
    // Stage 2 has no curriculum; the phase column is 0.
    for (const auto& [t, v] : sums) log << epoch + 1 << ",0," << term_name(t) << ',' << v / steps << '\n';
    log << epoch + 1 << ",0,discriminator," << d_sum / steps << '\n';
    log.flush();
    trainer.set_epoch(epoch + 1);
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d", epoch + 1);
    const fs::path dir = out / "checkpoints" / name;
    trainer.save_checkpoint(dir);
    summary.checkpoints.push_back(dir);
  }
  return summary;
}

std::vector<media::Image> translate_to_target(const Stage2Model& model, const std::vector<media::Image>& frames) {
  const int r = model.config.resolution;
  std::vector<media::Image> out;
  for (const auto& f : frames) {
    const media::Image in = f.height == r && f.width == r ? f : media::resize_area(f, r, r);
    const Var y = model.to_target(Var(media::image_to_tensor(in, true))).frame;
    out.push_back(media::tensor_to_image(y.value(), 0, true));
  }
  return out;
}

}  // namespace au2av::stage2
