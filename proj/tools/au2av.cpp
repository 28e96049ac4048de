// au2av: prepare | train-stage1 | train-stage2 | generate | evaluate | toy-data
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "au2av/app/commands.hpp"
#include "au2av/error.hpp"

namespace fs = std::filesystem;
using namespace au2av;

namespace {

struct Common {
  std::string config;
  std::optional<unsigned> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "pipeline config (JSON)")->required()->envname("AU2AV_CONFIG");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, "overrides paths.out");
}

app::PipelineConfig resolve(const Common& c) {
  app::PipelineConfig cfg = app::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.paths.out = c.out;
  cfg.validate();
  return cfg;
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Audio-driven talking-face generation and translation"};
  cli.require_subcommand(1);
  Common common;
  bool resume = false;

  auto* prepare = cli.add_subcommand("prepare", "validate raw clips and write the training layout");
  add_common(prepare, common);

  auto* train1 = cli.add_subcommand("train-stage1", "train the audio-to-face stage");
  add_common(train1, common);
  train1->add_flag("--resume", resume, "continue from the newest checkpoint");

  auto* train2 = cli.add_subcommand("train-stage2", "train the domain translation stage");
  add_common(train2, common);
  train2->add_flag("--resume", resume, "continue from the newest checkpoint");

  app::GenerateOptions gen;
  std::string audio, image, ckpt1, ckpt2;
  auto* generate = cli.add_subcommand("generate", "audio + one face image -> video");
  add_common(generate, common);
  generate->add_option("--audio", audio, "speech WAV")->required();
  generate->add_option("--image", image, "identity image (PNG)")->required();
  generate->add_option("--stage1", ckpt1, "stage-1 checkpoint (default: newest under out/stage1)");
  generate->add_option("--stage2", ckpt2, "stage-2 checkpoint (default: newest under out/stage2)");
  generate->add_flag("--skip-adapt", gen.skip_adapt, "use the trained generator as is");
  generate->add_option("--adapt-epochs", gen.adapt_epochs, "one-shot adaptation passes");
  generate->add_flag("--human-only", gen.human_only, "stop after the human-domain video");
  generate->add_flag("--keep-intermediate", gen.keep_intermediate, "also write the human-domain video");

  std::string generated, reference;
  auto* evaluate = cli.add_subcommand("evaluate", "score generated clips against references");
  add_common(evaluate, common);
  evaluate->add_option("--generated", generated, "generated clip (or directory of clips)")->required();
  evaluate->add_option("--reference", reference, "reference clip (or directory of clips)")->required();

  int toy_clips = 3, toy_frames = 25, toy_size = 64;
  double toy_seconds = 1.0;
  auto* toy = cli.add_subcommand("toy-data", "write procedural human and animated clips");
  add_common(toy, common);
  toy->add_option("--clips", toy_clips, "clips per domain");
  toy->add_option("--frames", toy_frames, "frames per clip");
  toy->add_option("--size", toy_size, "frame edge in pixels");
  toy->add_option("--generation-seconds", toy_seconds, "length of the sample speech file");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "au2av: error[usage]: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    const app::PipelineConfig cfg = resolve(common);
    if (*prepare) {
      const auto h = app::cmd_prepare(cfg.paths.human, cfg.paths.prepared_human(), cfg);
      std::cout << "prepared " << h.prepared.size() << " human clips (" << h.skipped.size() << " skipped)\n";
      if (!cfg.paths.target.empty() && fs::exists(cfg.paths.target)) {
        const auto t = app::cmd_prepare(cfg.paths.target, cfg.paths.prepared_target(), cfg);
        std::cout << "prepared " << t.prepared.size() << " target clips (" << t.skipped.size() << " skipped)\n";
      }
    } else if (*train1) {
      const auto s = app::cmd_train_stage1(cfg, resume);
      std::cout << "stage 1: " << s.checkpoints.size() << " checkpoints under " << cfg.paths.stage1_dir() << "\n";
    } else if (*train2) {
      const auto s = app::cmd_train_stage2(cfg, resume);
      std::cout << "stage 2: " << s.checkpoints.size() << " checkpoints under " << cfg.paths.stage2_dir() << "\n";
    } else if (*generate) {
      gen.audio = audio;
      gen.image = image;
      if (!ckpt1.empty()) {
        gen.stage1_checkpoint = ckpt1;
      } else if (auto latest = stage1::latest_checkpoint(cfg.paths.stage1_dir())) {
        gen.stage1_checkpoint = *latest;
      } else {
        throw ValidationError("no stage-1 checkpoint under " + cfg.paths.stage1_dir().string());
      }
      if (!ckpt2.empty())
        gen.stage2_checkpoint = fs::path(ckpt2);
      else if (!gen.human_only)
        gen.stage2_checkpoint = stage2::latest_stage2_checkpoint(cfg.paths.stage2_dir());
      gen.out = cfg.paths.out / "generated";
      const auto r = app::cmd_generate(cfg, gen);
      std::cout << r.human.frames.size() << " frames written to " << r.output_dir << "\n";
    } else if (*evaluate) {
      const auto report = app::cmd_evaluate(generated, reference, cfg.paths.out / "eval", cfg);
      std::cout << report.table();
    } else if (*toy) {
      app::cmd_toy_data(cfg, toy_clips, toy_frames, toy_size);
      app::write_toy_generation_inputs(cfg.paths.out / "inputs" / "speech.wav", cfg.paths.out / "inputs" / "face.png",
                                       toy_seconds, toy_size, cfg.seed + 31u);
      std::cout << "toy data under " << cfg.paths.human << " and " << cfg.paths.target << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "au2av: error[" << e.kind() << "]: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "au2av: error[internal]: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
