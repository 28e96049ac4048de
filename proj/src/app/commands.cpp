#include "au2av/app/commands.hpp"

#include <fstream>
#include <iostream>
#include <set>

#include "au2av/error.hpp"
#include "au2av/media/face.hpp"
#include "au2av/media/framing.hpp"
#include "au2av/media/streams.hpp"
#include "au2av/media/toy_data.hpp"

namespace au2av::app {

namespace fs = std::filesystem;

namespace {

std::optional<media::ClipManifest> manifest_of(const fs::path& dir) {
  const fs::path file = dir / media::kManifestName;
  if (!fs::exists(file)) return std::nullopt;
  return media::ClipManifest::read(file);
}

// Sidecar named by the manifest, else the conventional file name.
std::optional<fs::path> sidecar(const fs::path& dir, const std::optional<media::ClipManifest>& m, const char* key,
                                const char* fallback) {
  if (m)
    if (auto it = m->extra.find(key); it != m->extra.end()) return dir / it->second;
  if (fs::exists(dir / fallback)) return dir / fallback;
  return std::nullopt;
}

void write_config_snapshot(const PipelineConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << config.to_json();
}

bool holds_frames(const fs::path& dir) {
  if (fs::exists(dir / media::kManifestName)) return true;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") return true;
  return false;
}

std::vector<std::string> transcript_of(const fs::path& dir) {
  const auto m = manifest_of(dir);
  if (!m) return {};
  const auto it = m->extra.find("transcript");
  return it == m->extra.end() ? std::vector<std::string>{} : split_words(it->second);
}

eval::MetricReport average_reports(const std::vector<eval::MetricReport>& reports) {
  if (reports.size() == 1) return reports[0];
  eval::MetricReport out;
  for (const auto& name : eval::metric_names()) {
    std::vector<double> values;
    bool all_pass = true, any_flag = false;
    for (const auto& r : reports) {
      const auto& e = r.at(name);
      if (e.skipped || !e.value) continue;
      values.push_back(*e.value);
      if (e.passed) {
        any_flag = true;
        all_pass = all_pass && *e.passed;
      }
    }
    eval::MetricEntry e{name, std::nullopt, std::nullopt, std::nullopt, values.empty(), ""};
    if (values.empty()) {
      e.note = reports[0].at(name).note;
    } else {
      double mean = 0.0, var = 0.0;
      for (double v : values) mean += v / values.size();
      if (std::isfinite(mean))
        for (double v : values) var += (v - mean) * (v - mean) / values.size();
      e.value = mean;
      e.std = std::sqrt(var);
      if (any_flag) e.passed = all_pass;
    }
    out.metrics.push_back(e);
  }
  for (const auto& r : reports) out.providers.insert(r.providers.begin(), r.providers.end());
  return out;
}

}  // namespace

PrepareSummary cmd_prepare(const fs::path& raw_dir, const fs::path& out_dir, const PipelineConfig& config) {
  if (!fs::is_directory(raw_dir)) throw IoError("no such media directory: " + raw_dir.string());
  PrepareSummary summary;
  for (const auto& dir : media::list_clip_dirs(raw_dir)) {
    const std::string name = dir.filename().string();
    try {
      media::TalkingClip clip = media::load_video(dir);
      const auto manifest = manifest_of(dir);
      if (!manifest && fs::exists(dir / "audio.wav")) clip.audio = media::load_audio(dir / "audio.wav");
      fs::remove_all(out_dir / name);

      std::map<std::string, std::string> extra;
      int identity = 0;
      if (config.providers.pose == "sidecar")
        if (const auto pose = sidecar(dir, manifest, "pose_path", "pose.txt")) {
          identity = media::select_aligned_frame_index(clip, TablePoseProvider::from_file(*pose));
          fs::create_directories(out_dir / name);
          fs::copy_file(*pose, out_dir / name / "pose.txt", fs::copy_options::overwrite_existing);
          extra["pose_path"] = "pose.txt";
        }
      if (config.providers.landmarks == "sidecar")
        if (const auto lm = sidecar(dir, manifest, "landmarks_path", "landmarks.txt")) {
          if (TableLandmarkProvider::from_file(*lm).table().size() != clip.frames.size())
            throw ValidationError("landmark table length differs from the frame count");
          fs::create_directories(out_dir / name);
          fs::copy_file(*lm, out_dir / name / "landmarks.txt", fs::copy_options::overwrite_existing);
          extra["landmarks_path"] = "landmarks.txt";
        }
      if (manifest)
        if (auto it = manifest->extra.find("transcript"); it != manifest->extra.end()) extra["transcript"] = it->second;
      extra["identity_path"] = "identity.png";
      extra["identity_frame"] = std::to_string(identity);
      media::write_clip(out_dir / name, clip, extra);
      media::write_png(out_dir / name / "identity.png", clip.frames[identity]);
      summary.prepared.push_back(name);
    } catch (const std::exception& e) {
      fs::remove_all(out_dir / name);
      std::cerr << "prepare: skipping " << name << ": " << e.what() << "\n";
      summary.skipped.push_back(name + ": " + e.what());
    }
  }
  if (summary.prepared.empty()) throw ValidationError("prepare: no usable clips under " + raw_dir.string());
  std::ofstream list(out_dir / "dataset.txt");
  for (const auto& n : summary.prepared) list << n << "\n";
  return summary;
}

stage1::TrainSummary cmd_train_stage1(const PipelineConfig& config, bool resume) {
  auto clips = stage1::load_stage1_dataset(config.paths.prepared_human(), config.stage1.arch.resolution);
  if (config.providers.landmarks == "none")
    for (auto& c : clips) c.landmarks.reset();
  write_config_snapshot(config, config.paths.stage1_dir());
  return stage1::train_stage1(clips, config.stage1, make_feature_provider(config.providers), config.paths.stage1_dir(),
                              resume);
}

stage2::Stage2Summary cmd_train_stage2(const PipelineConfig& config, bool resume) {
  auto data = stage2::load_domain_data(config.paths.prepared_human(), config.paths.prepared_target(),
                                       config.stage2.arch.resolution, config.stage2.arch.past_frames);
  if (config.providers.landmarks == "none") {
    for (auto& c : data.source) c.landmarks.reset();
    for (auto& c : data.target) c.landmarks.reset();
  }
  write_config_snapshot(config, config.paths.stage2_dir());
  return stage2::train_stage2(data, config.stage2, config.paths.stage2_dir(), resume);
}

GenerateResult cmd_generate(const PipelineConfig& config, const GenerateOptions& o) {
  if (!fs::exists(o.audio)) throw IoError("no such audio file: " + o.audio.string());
  if (!fs::exists(o.image)) throw IoError("no such image: " + o.image.string());
  if (!o.human_only && !o.stage2_checkpoint)
    throw ValidationError("no stage-2 checkpoint; train stage 2 or pass --human-only");

  stage1::Stage1Model model = stage1::load_stage1_model(o.stage1_checkpoint, config.stage1.arch);
  std::optional<stage2::Stage2Model> translator;
  if (!o.human_only) translator = stage2::load_stage2_model(*o.stage2_checkpoint, config.stage2.arch);

  const media::AudioClip audio = media::load_audio(o.audio);
  const ag::Tensor identity = stage1::identity_tensor(media::read_png(o.image), config.stage1.arch.resolution);

  GenerateResult r;
  if (!o.skip_adapt) {
    const auto features = make_feature_provider(config.providers);
    stage1::AdaptResult adapted = stage1::one_shot_adapt(model, identity, *features,
                                                         o.adapt_epochs.value_or(config.adapt_epochs),
                                                         config.stage1.optimizer);
    r.adapt_losses = adapted.losses;
    model = std::move(adapted.model);
  }

  const auto windows = media::frame_audio_windows(audio, media::kCanonicalFps);
  const ag::Var id(identity);
  r.human.fps = media::kCanonicalFps;
  r.human.audio = audio;
  for (const auto& w : windows.windows) {
    const ag::Var frame = model.generate_frame(id, model.encode_speech(w.coefficients));
    r.human.frames.push_back(media::tensor_to_image(frame.value(), 0, true));
  }
  if (r.human.frames.empty()) throw ValidationError("audio is too short for a single frame");

  if (o.human_only || o.keep_intermediate) {
    fs::remove_all(o.out / "human");
    media::write_clip(o.out / "human", r.human);
    r.output_dir = o.out / "human";
  }
  if (translator) {
    media::TalkingClip animated;
    animated.fps = r.human.fps;
    animated.audio = audio;
    animated.frames = stage2::translate_to_target(*translator, r.human.frames);
    fs::remove_all(o.out / "animated");
    media::write_clip(o.out / "animated", animated);
    r.output_dir = o.out / "animated";
    r.animated = std::move(animated);
  }
  return r;
}

eval::MetricReport cmd_evaluate(const fs::path& generated, const fs::path& reference, const fs::path& out,
                                const PipelineConfig& config) {
  for (const auto& d : {generated, reference})
    if (!fs::is_directory(d)) throw IoError("no such clip directory: " + d.string());

  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (holds_frames(generated) && holds_frames(reference)) {
    pairs.emplace_back(generated, reference);
  } else {
    std::set<std::string> gen_names, ref_names;
    for (const auto& d : media::list_clip_dirs(generated)) gen_names.insert(d.filename().string());
    for (const auto& d : media::list_clip_dirs(reference)) ref_names.insert(d.filename().string());
    std::string only_gen, only_ref;
    for (const auto& n : gen_names)
      if (!ref_names.count(n)) only_gen += (only_gen.empty() ? "" : ",") + n;
    for (const auto& n : ref_names)
      if (!gen_names.count(n)) only_ref += (only_ref.empty() ? "" : ",") + n;
    if (!only_gen.empty() || !only_ref.empty())
      throw ValidationError("clip sets differ; only generated: [" + only_gen + "] only reference: [" + only_ref + "]");
    if (gen_names.empty()) throw ValidationError("no clips under " + generated.string());
    for (const auto& n : gen_names) pairs.emplace_back(generated / n, reference / n);
  }

  const auto embedding = make_embedding_provider(config.providers);
  std::vector<eval::MetricReport> reports;
  std::vector<std::string> inputs;
  fs::create_directories(out / "clips");
  for (const auto& [gen_dir, ref_dir] : pairs) {
    const media::TalkingClip gen = media::load_video(gen_dir);
    media::TalkingClip ref = media::load_video(ref_dir);
    // Reference frames are brought to the generated size.
    if (!ref.frames.empty() && !gen.frames.empty() && !ref.frames[0].same_shape(gen.frames[0]))
      for (auto& f : ref.frames) f = media::resize_area(f, gen.height(), gen.width());

    eval::EvalProviders p;
    p.inception = embedding.get();
    p.identity = embedding.get();
    std::optional<TableLandmarkProvider> marks;
    if (config.providers.landmarks == "sidecar")
      if (const auto lm = sidecar(gen_dir, manifest_of(gen_dir), "landmarks_path", "landmarks.txt"))
        marks = TableLandmarkProvider::from_file(*lm);
    if (marks) p.landmarks = &*marks;
    std::optional<ScriptedLipReader> reader;
    const auto gen_words = transcript_of(gen_dir), ref_words = transcript_of(ref_dir);
    if (config.providers.lip_reader == "transcript" && !gen_words.empty() && !ref_words.empty()) {
      reader.emplace(gen_words);
      p.lip_reader = &*reader;
      p.transcript = ref_words;
    }

    eval::MetricReport r = eval::evaluate_clip(gen, ref, p);
    r.inputs = {(gen_dir / media::kManifestName).generic_string(), (ref_dir / media::kManifestName).generic_string()};
    r.config_hash = config.hash();
    r.write(out / "clips" / (gen_dir.filename().string() + ".json"));
    inputs.insert(inputs.end(), r.inputs.begin(), r.inputs.end());
    reports.push_back(std::move(r));
  }
  eval::MetricReport combined = average_reports(reports);
  combined.inputs = inputs;
  combined.config_hash = config.hash();
  combined.write(out / "report.json");
  return combined;
}

void cmd_toy_data(const PipelineConfig& config, int clips, int frames, int size) {
  if (clips < 1 || frames < 1 || size < 16) throw ValidationError("toy data needs clips >= 1, frames >= 1, size >= 16");
  if (config.paths.human.empty() || config.paths.target.empty())
    throw ValidationError("config: paths.human and paths.target must be set");
  toy::ToyClipOptions o;
  o.frames = frames;
  o.size = size;
  o.seed = config.seed;
  toy::write_toy_dataset(config.paths.human, clips, o);
  o.style = toy::FaceStyle::kAnime;
  o.seed = config.seed + 7919u;
  toy::write_toy_dataset(config.paths.target, clips, o);
}

void write_toy_generation_inputs(const fs::path& audio, const fs::path& image, double seconds, int size,
                                 unsigned seed) {
  toy::ToyClipOptions o;
  o.frames = static_cast<int>(std::lround(seconds * o.fps));
  o.size = size;
  o.seed = seed;
  const toy::ToyClip toy = toy::make_toy_clip(o);
  if (!audio.parent_path().empty()) fs::create_directories(audio.parent_path());
  if (!image.parent_path().empty()) fs::create_directories(image.parent_path());
  media::write_wav(audio, *toy.clip.audio);
  media::write_png(image, toy.clip.frames[0]);
}

}  // namespace au2av::app
