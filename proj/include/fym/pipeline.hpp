#pragma once

// End-to-end runs: generate -> train -> fine-tune -> sample -> evaluate.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fym/flowmatch/sample.hpp"
#include "fym/flowmatch/train.hpp"
#include "fym/io/bundle.hpp"
#include "fym/io/checkpoint.hpp"
#include "fym/io/report.hpp"
#include "fym/metrics/flow.hpp"
#include "fym/metrics/scores.hpp"

namespace fym::pipeline {

using Log = std::function<void(const std::string&)>;

/// Settings used for the desk-scale reconstruction run: random 256-pixel subsets of 16 frames per
/// step, a higher learning rate than the paper's 1e-4 and cosine decay.
inline flowmatch::TrainConfig reconstruction_config(std::uint64_t seed = 0) {
  flowmatch::TrainConfig c;
  c.steps = 3000;
  c.batch = 16;
  c.pixels_per_sample = 256;
  c.learning_rate = 2e-3;
  c.final_lr_fraction = 0.05;
  c.seed = seed;
  return c;
}

inline flowmatch::TrainConfig finetune_config(std::uint64_t seed = 0, bool dram = true) {
  flowmatch::TrainConfig c = reconstruction_config(seed);
  c.steps = 1000;
  c.learning_rate = 1e-3;
  c.phase = flowmatch::Phase::finetune;
  c.dram = dram;
  return c;
}

inline std::uint64_t frame_seed(std::uint64_t seed, int frame) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(frame);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Samples every frame of a clip from its masks and first frame. Frame 1 is the conditioning frame
/// itself and is sampled like any other. Results are clamped to [0, 1].
inline std::vector<Image> sample_clip(const flowmatch::VelocityModel& model, const synth::VideoBundle& clip,
                                      int steps, std::uint64_t seed, double t_min = 1e-3,
                                      const std::vector<std::vector<double>>* token_weights = nullptr) {
  const flowmatch::CfmSchedule schedule(t_min);
  const int k = static_cast<int>(clip.frame_count());
  std::vector<Image> out;
  for (int f = 1; f <= k; ++f) {
    const auto& w = token_weights ? token_weights->at(f - 1) : flowmatch::unit_weights(model.config());
    const tensor::Array tokens = flowmatch::fixed_tokens(model, clip.masks[f - 1], f, k, w);
    out.push_back(clamp01(flowmatch::sample_frame(model, schedule, tokens, clip.frames.front(), steps, frame_seed(seed, f))));
  }
  return out;
}

inline std::vector<dram::LandmarkSet> detect_landmarks(const std::vector<Image>& frames) {
  std::vector<dram::LandmarkSet> out;
  for (const Image& f : frames) out.push_back(synth::extract_landmarks(f));
  return out;
}

/// The edited clip used for fine-tuning: per-frame motion jitter plus an appearance edit.
inline synth::VideoBundle make_edited(const synth::VideoBundle& rendered, double jitter, const synth::Edit& edit,
                                      std::uint64_t seed) {
  return synth::apply_edit(synth::perturb_motion(rendered, jitter, seed), edit);
}

struct ReproOptions {
  std::uint64_t seed = 0;
  int frames = 16;
  std::size_t size = 32;
  synth::MotionSpec motion{synth::MotionKind::translate, {2.0, 0.0}, 0};
  flowmatch::ModelConfig model;
  flowmatch::TrainConfig phase1 = reconstruction_config();
  flowmatch::TrainConfig phase2 = finetune_config();
  double jitter = 2.0;
  synth::Edit edit{synth::EditKind::recolor, 2.0};
  int sample_steps = 50;
};

struct ReproResult {
  std::vector<double> psnr;
  double mean_psnr = 0.0;
  std::vector<double> phase1_losses;
  std::vector<double> phase2_losses;
  double consistency_total = 0.0;
  double expression_error = 0.0;
};

inline io::CsvTable reconstruction_report(const std::vector<double>& psnr) {
  io::CsvTable t{{"frame", "psnr_db"}, {}};
  double sum = 0.0;
  for (std::size_t i = 0; i < psnr.size(); ++i) {
    t.add({std::to_string(i + 1), io::fixed6(psnr[i])});
    sum += psnr[i];
  }
  t.add({"mean", io::fixed6(psnr.empty() ? 0.0 : sum / static_cast<double>(psnr.size()))});
  return t;
}

inline io::CsvTable expression_report(const std::vector<dram::LandmarkSet>& ref, const std::vector<dram::LandmarkSet>& pred) {
  io::CsvTable t{{"frames", "points", "expression_error"}, {}};
  t.add({std::to_string(ref.size()), std::to_string(ref.empty() ? 0 : ref.front().size()),
         io::fixed6(metrics::expression_error(ref, pred))});
  return t;
}

inline nlohmann::ordered_json train_meta(const flowmatch::TrainConfig& c) {
  return {{"phase", flowmatch::to_string(c.phase)}, {"steps", c.steps},   {"batch", c.batch},
          {"pixels_per_sample", c.pixels_per_sample}, {"learning_rate", c.learning_rate},
          {"final_lr_fraction", c.final_lr_fraction}, {"seed", c.seed}, {"dram", c.dram}};
}

/// Writes rendered/, edited/, output/ bundles, phase1.fym, phase2.fym and the CSV reports into `dir`.
inline ReproResult run_repro(const io::fs::path& dir, ReproOptions opt, const Log& log = {}) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  opt.motion.seed = opt.seed;
  opt.phase1.seed = opt.seed;
  opt.phase2.seed = opt.seed + 1;
  opt.model.height = opt.size;
  opt.model.width = opt.size;
  io::fs::create_directories(dir);
  ReproResult res;

  say("generating synthetic clip");
  const synth::VideoBundle rendered = synth::generate(opt.motion, opt.frames, opt.size, opt.size);
  const synth::VideoBundle edited = make_edited(rendered, opt.jitter, opt.edit, opt.seed + 2);
  io::write_bundle(dir / "rendered", rendered);
  io::write_bundle(dir / "edited", edited);

  say("phase 1: training on the rendered clip (" + std::to_string(opt.phase1.steps) + " steps)");
  flowmatch::VelocityModel model(opt.model, opt.seed);
  {
    flowmatch::Trainer trainer(model, rendered, opt.phase1);
    res.phase1_losses = trainer.run();
  }
  io::write_checkpoint(dir / "phase1.fym", io::make_checkpoint(model, opt.phase1.t_min, train_meta(opt.phase1)));
  io::write_report(dir / "loss_phase1.csv", io::loss_report(res.phase1_losses));

  say("sampling reconstructions");
  const auto recon = sample_clip(model, rendered, opt.sample_steps, opt.seed, opt.phase1.t_min);
  for (std::size_t i = 0; i < recon.size(); ++i) res.psnr.push_back(metrics::psnr(recon[i], rendered.frames[i]));
  for (double p : res.psnr) res.mean_psnr += p / static_cast<double>(res.psnr.size());
  io::write_report(dir / "reconstruction.csv", reconstruction_report(res.psnr));

  say("phase 2: fine-tuning on the edited clip (" + std::to_string(opt.phase2.steps) + " steps, dram " +
      (opt.phase2.dram ? "on" : "off") + ")");
  flowmatch::VelocityModel tuned = io::load_model(io::read_checkpoint(dir / "phase1.fym"), dir / "phase1.fym");
  {
    flowmatch::Trainer trainer(tuned, edited, opt.phase2, rendered.landmarks);
    res.phase2_losses = trainer.run();
  }
  io::write_checkpoint(dir / "phase2.fym", io::make_checkpoint(tuned, opt.phase2.t_min, train_meta(opt.phase2)));
  io::write_report(dir / "loss_phase2.csv", io::loss_report(res.phase2_losses));

  say("sampling the edited clip");
  synth::VideoBundle output = edited;
  output.frames = sample_clip(tuned, edited, opt.sample_steps, opt.seed + 3, opt.phase2.t_min);
  output.landmarks = detect_landmarks(output.frames);
  output.motion.reset();
  io::write_bundle(dir / "output", output);

  const auto m_ref = metrics::flow_series(rendered.frames);
  const auto m_out = metrics::flow_series(output.frames);
  res.consistency_total = metrics::consistency_total_error(m_out, m_ref);
  io::write_report(dir / "consistency.csv", io::consistency_report(m_ref, m_out));
  res.expression_error = metrics::expression_error(rendered.landmarks, output.landmarks);
  io::write_report(dir / "expression.csv", expression_report(rendered.landmarks, output.landmarks));
  return res;
}

}  // namespace fym::pipeline
