// fym: generate synthetic clips, train and fine-tune the velocity model, sample, evaluate.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "fym/checks.hpp"
#include "fym/io/trajectory.hpp"
#include "fym/pipeline.hpp"

namespace {

using namespace fym;

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool quiet = false;

  std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("FYM_SEED"); env && *env) {
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(env, &used);
        if (used == std::string(env).size()) return v;
      } catch (const std::exception&) {
      }
      throw std::invalid_argument("FYM_SEED must be a non-negative integer, got '" + std::string(env) + "'");
    }
    return 0;
  }

  void say(const std::string& s) const {
    if (!quiet) std::cerr << s << '\n';
  }
};

std::vector<double> default_params(synth::MotionKind kind) {
  switch (kind) {
    case synth::MotionKind::translate: return {2.0, 0.0};
    case synth::MotionKind::orbit: return {5.0, 0.25};
    case synth::MotionKind::oscillate: return {4.0, 3.0, 8.0};
  }
  return {};
}

// gen-synth

struct GenArgs {
  std::string out;
  int frames = 16;
  std::size_t size = 32;
  std::string motion = "translate";
  std::vector<double> params;
  std::string edit;
  double gamma = 2.0;
  double jitter = 0.0;
};

int cmd_gen(const GenArgs& a, const Globals& g) {
  const std::uint64_t seed = g.resolved_seed();
  synth::MotionSpec spec;
  spec.kind = synth::parse_motion_kind(a.motion);
  spec.params = a.params.empty() ? default_params(spec.kind) : a.params;
  spec.seed = seed;
  if (a.jitter < 0.0) throw std::invalid_argument("--jitter must be >= 0");
  if (a.jitter > 0.0 && a.edit.empty()) throw std::invalid_argument("--jitter needs --edit (it models an edited clip)");
  synth::VideoBundle b = synth::generate(spec, a.frames, a.size, a.size);
  if (!a.edit.empty()) {
    const synth::Edit edit = synth::parse_edit(a.edit, a.gamma);
    b = a.jitter > 0.0 ? pipeline::make_edited(b, a.jitter, edit, seed + 2) : synth::apply_edit(b, edit);
  }
  io::write_bundle(a.out, b);
  g.say("wrote " + std::to_string(b.frame_count()) + " frames to " + a.out);
  return 0;
}

// train

struct TrainArgs {
  std::string data;
  std::string out;
  std::optional<int> steps;
  bool dram = false;
  std::string from;
  std::string reference;
  std::string loss_csv;
  std::optional<double> lr;
  std::optional<double> lr_final;
  std::optional<int> batch;
  std::optional<std::size_t> pixels;
  int progress = 0;
  // fresh-model settings
  std::optional<int> hidden;
  std::optional<int> attention_dim;
  std::optional<std::size_t> grid;
  std::optional<int> levels;
  std::optional<int> features;
  std::optional<int> log2_table;
  std::optional<double> r_min;
  std::optional<double> r_max;

  bool model_flags() const {
    return hidden || attention_dim || grid || levels || features || log2_table || r_min || r_max;
  }
};

std::string loss_csv_path(const TrainArgs& a) {
  if (!a.loss_csv.empty()) return a.loss_csv;
  io::fs::path p(a.out);
  p.replace_extension(".loss.csv");
  return p.string();
}

int cmd_train(const TrainArgs& a, const Globals& g) {
  const std::uint64_t seed = g.resolved_seed();
  const bool finetune = !a.from.empty();
  if (finetune && a.model_flags()) {
    throw std::invalid_argument("model options cannot be combined with --from; the checkpoint fixes the model");
  }
  flowmatch::TrainConfig cfg = finetune ? pipeline::finetune_config(seed, a.dram) : pipeline::reconstruction_config(seed);
  cfg.dram = a.dram;
  if (a.steps) cfg.steps = *a.steps;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.lr_final) cfg.final_lr_fraction = *a.lr_final;
  if (a.batch) cfg.batch = *a.batch;
  if (a.pixels) cfg.pixels_per_sample = *a.pixels;
  cfg.validate();

  const synth::VideoBundle clip = io::read_bundle(a.data);
  std::optional<std::vector<dram::LandmarkSet>> reference;
  if (!a.reference.empty()) {
    reference = io::read_bundle(a.reference).landmarks;
    if (reference->size() != clip.frame_count()) {
      throw std::invalid_argument("--reference has " + std::to_string(reference->size()) + " frames, --data has " +
                                  std::to_string(clip.frame_count()));
    }
  }

  flowmatch::VelocityModel model;
  double t_min = cfg.t_min;
  if (finetune) {
    const io::Checkpoint ck = io::read_checkpoint(a.from);
    model = io::load_model(ck, a.from);
    t_min = ck.t_min;
    cfg.t_min = t_min;
  } else {
    flowmatch::ModelConfig mc;
    mc.height = clip.height();
    mc.width = clip.width();
    if (a.hidden) mc.hidden = *a.hidden;
    if (a.attention_dim) mc.attention_dim = *a.attention_dim;
    if (a.grid) mc.grid_h = mc.grid_w = *a.grid;
    if (a.levels) mc.hash.levels = *a.levels;
    if (a.features) mc.hash.features = *a.features;
    if (a.log2_table) {
      if (*a.log2_table < 1 || *a.log2_table > 24) throw std::invalid_argument("--log2-table must lie in 1..24");
      mc.hash.table_size = std::uint64_t{1} << *a.log2_table;
    }
    if (a.r_min) mc.hash.r_min = *a.r_min;
    if (a.r_max) mc.hash.r_max = *a.r_max;
    model = flowmatch::VelocityModel(mc, seed);
  }

  flowmatch::Trainer trainer(model, clip, cfg, reference);
  std::size_t warnings = 0;
  trainer.set_warning_sink([&](const std::string& w) {
    if (warnings++ < 5) g.say("warning: " + w);
  });
  g.say(std::string(finetune ? "fine-tuning" : "training") + " for " + std::to_string(cfg.steps) + " steps");
  const auto& losses = trainer.run([&](int s, double l) {
    if (a.progress > 0 && (s + 1) % a.progress == 0) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "step %d loss %.6f (window mean %.6f)", s + 1, l,
                    flowmatch::smoothed_end(trainer.losses()));
      g.say(buf);
    }
  });
  io::write_checkpoint(a.out, io::make_checkpoint(model, t_min, pipeline::train_meta(cfg)));
  io::write_report(loss_csv_path(a), io::loss_report(losses));
  if (!losses.empty()) {
    std::printf("smoothed loss: start %.6f end %.6f ratio %.4f\n", flowmatch::smoothed_start(losses),
                flowmatch::smoothed_end(losses), flowmatch::smoothed_end(losses) / flowmatch::smoothed_start(losses));
  }
  if (warnings > 5) g.say(std::to_string(warnings) + " landmark warnings in total");
  return 0;
}

// sample

struct SampleArgs {
  std::string ckpt;
  std::string data;
  int frame = 0;
  bool all = false;
  int steps = 50;
  std::string out;
};

int cmd_sample(const SampleArgs& a, const Globals& g) {
  const std::uint64_t seed = g.resolved_seed();
  if (a.steps < 1) throw std::invalid_argument("--steps must be >= 1");
  if (a.all == (a.frame != 0)) throw std::invalid_argument("give exactly one of --frame i or --all");
  const io::Checkpoint ck = io::read_checkpoint(a.ckpt);
  const flowmatch::VelocityModel model = io::load_model(ck, a.ckpt);
  const synth::VideoBundle clip = io::read_bundle(a.data);
  if (!clip.frames.front().same_dims(model.config().height, model.config().width)) {
    throw std::invalid_argument("bundle dimensions do not match the checkpoint");
  }
  const int k = static_cast<int>(clip.frame_count());
  if (a.all) {
    synth::VideoBundle out = clip;
    out.frames = pipeline::sample_clip(model, clip, a.steps, seed, ck.t_min);
    out.landmarks = pipeline::detect_landmarks(out.frames);
    out.motion.reset();
    io::write_bundle(a.out, out);
    g.say("wrote " + std::to_string(k) + " sampled frames to " + a.out);
    return 0;
  }
  if (a.frame < 1 || a.frame > k) {
    throw std::invalid_argument("--frame " + std::to_string(a.frame) + " outside 1.." + std::to_string(k));
  }
  const flowmatch::CfmSchedule schedule(ck.t_min);
  const tensor::Array tokens = flowmatch::fixed_tokens(model, clip.masks[a.frame - 1], a.frame, k,
                                                       flowmatch::unit_weights(model.config()));
  const Image img = clamp01(flowmatch::sample_frame(model, schedule, tokens, clip.frames.front(), a.steps,
                                                    pipeline::frame_seed(seed, a.frame)));
  io::write_frame(a.out, img);
  std::printf("frame %d psnr vs bundle frame %.4f dB\n", a.frame, metrics::psnr(img, clip.frames[a.frame - 1]));
  return 0;
}

// eval

struct EvalArgs {
  std::string mode;
  std::string ref;
  std::string pred;
  std::string out;
};

int cmd_eval(const EvalArgs& a, const Globals& g) {
  const synth::VideoBundle ref = io::read_bundle(a.ref);
  const synth::VideoBundle pred = io::read_bundle(a.pred);
  if (ref.frame_count() != pred.frame_count()) {
    throw std::invalid_argument("reference has " + std::to_string(ref.frame_count()) + " frames, prediction has " +
                                std::to_string(pred.frame_count()));
  }
  if (a.mode == "consistency") {
    const auto m_ref = metrics::flow_series(ref.frames);
    const auto m_pred = metrics::flow_series(pred.frames);
    const io::CsvTable t = io::consistency_report(m_ref, m_pred);
    io::write_report(a.out, t);
    std::printf("total error %s\n", t.rows.back().back().c_str());
  } else {
    const io::CsvTable t = pipeline::expression_report(ref.landmarks, pred.landmarks);
    io::write_report(a.out, t);
    std::printf("expression error %s\n", t.rows.back().back().c_str());
  }
  g.say("wrote " + a.out);
  return 0;
}

// gradcheck

int cmd_gradcheck(const Globals& g) {
  const auto results = checks::all_suites(g.resolved_seed());
  bool ok = true;
  std::printf("%-34s %6s %12s %12s  %s\n", "suite", "probes", "max_rel", "mean_rel", "result");
  for (const auto& r : results) {
    std::printf("%-34s %6zu %12.3e %12.3e  %s\n", r.name.c_str(), r.probes, r.max_rel_error, r.mean_rel_error,
                r.passed() ? "pass" : (r.deterministic ? "FAIL" : "FAIL (non-deterministic loss)"));
    ok = ok && r.passed();
  }
  std::printf("tolerance %.0e, h = %.0e: %s\n", checks::kGradTolerance, checks::kGradStep, ok ? "all suites pass" : "FAILED");
  return ok ? 0 : kExitRuntime;
}

// repro

struct ReproArgs {
  std::string out;
  std::optional<int> steps;
  std::optional<int> finetune_steps;
  bool no_dram = false;
  double jitter = 2.0;
  int sample_steps = 50;
};

int cmd_repro(const ReproArgs& a, const Globals& g) {
  pipeline::ReproOptions opt;
  opt.seed = g.resolved_seed();
  if (a.steps) opt.phase1.steps = *a.steps;
  if (a.finetune_steps) opt.phase2.steps = *a.finetune_steps;
  opt.phase2.dram = !a.no_dram;
  opt.jitter = a.jitter;
  opt.sample_steps = a.sample_steps;
  opt.phase1.validate();
  opt.phase2.validate();
  if (opt.sample_steps < 1) throw std::invalid_argument("--sample-steps must be >= 1");
  const auto r = pipeline::run_repro(a.out, opt, [&](const std::string& s) { g.say(s); });
  std::printf("mean psnr %.4f dB\n", r.mean_psnr);
  std::printf("phase 1 smoothed loss ratio %.4f\n",
              flowmatch::smoothed_end(r.phase1_losses) / flowmatch::smoothed_start(r.phase1_losses));
  std::printf("consistency total error %.6f\n", r.consistency_total);
  std::printf("expression error %.6f\n", r.expression_error);
  return 0;
}

// traj

struct TrajArgs {
  std::string ckpt;
  std::string data;
  int frame = 1;
  std::string out;
};

int cmd_traj(const TrajArgs& a, const Globals& g) {
  const io::Checkpoint ck = io::read_checkpoint(a.ckpt);
  const flowmatch::VelocityModel model = io::load_model(ck, a.ckpt);
  const synth::VideoBundle clip = io::read_bundle(a.data);
  const int k = static_cast<int>(clip.frame_count());
  if (a.frame < 1 || a.frame > k) {
    throw std::invalid_argument("--frame " + std::to_string(a.frame) + " outside 1.." + std::to_string(k));
  }
  const auto map = trajectory::trajectory_map(model.config().hash, model.table(), a.frame, clip.masks[a.frame - 1],
                                              clip.height(), clip.width(), k);
  io::write_trajectory(a.out, map);
  g.say("wrote " + std::to_string(map.height) + "x" + std::to_string(map.width) + "x" + std::to_string(map.channels) +
        " trajectory map to " + a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fym: hash-encoded trajectories, trajectory-conditioned flow matching and landmark re-weighting"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random draw (falls back to FYM_SEED, then 0)");
  app.add_option("--threads", g.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress messages");
  // Accept global options after the subcommand name too.
  app.fallthrough();

  std::function<int()> run;

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-synth", "Render a synthetic clip (optionally edited) into a bundle directory");
  c_gen->add_option("--out", gen.out, "Output bundle directory")->required();
  c_gen->add_option("--frames", gen.frames, "Frame count K")->capture_default_str();
  c_gen->add_option("--size", gen.size, "Frame side in pixels (>= 32)")->capture_default_str();
  c_gen->add_option("--motion", gen.motion, "translate | orbit | oscillate")->capture_default_str();
  c_gen->add_option("--params", gen.params,
                    "Motion parameters, comma separated. translate: vx,vy (default 2,0); orbit: radius,rate "
                    "(default 5,0.25); oscillate: ax,ay,period (default 4,3,8)")
      ->delimiter(',');
  c_gen->add_option("--edit", gen.edit, "Appearance edit: recolor | accessory");
  c_gen->add_option("--gamma", gen.gamma, "Recolor gamma")->capture_default_str();
  c_gen->add_option("--jitter", gen.jitter, "Per-frame motion perturbation in px before the edit (needs --edit)")
      ->capture_default_str();
  c_gen->callback([&] { run = [&] { return cmd_gen(gen, g); }; });

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train on a bundle, or fine-tune a checkpoint with --from");
  c_train->add_option("--data", tr.data, "Training bundle directory")->required();
  c_train->add_option("--out", tr.out, "Output checkpoint path")->required();
  c_train->add_option("--steps", tr.steps, "Optimizer steps (default 3000, or 1000 with --from)");
  c_train->add_flag("--dram", tr.dram, "Enable landmark re-weighting of the trajectory tokens");
  c_train->add_option("--from", tr.from, "Checkpoint to fine-tune from");
  c_train->add_option("--reference", tr.reference,
                      "Bundle whose landmarks drive re-weighting (default: the training bundle's own)");
  c_train->add_option("--loss-csv", tr.loss_csv, "Loss curve CSV (default: --out with its extension replaced by .loss.csv)");
  c_train->add_option("--lr", tr.lr, "Adam learning rate (default 2e-3, or 1e-3 with --from)");
  c_train->add_option("--lr-final", tr.lr_final, "Cosine decay target as a fraction of --lr (default 0.05)");
  c_train->add_option("--batch", tr.batch, "Frames per step (default 16)");
  c_train->add_option("--pixels", tr.pixels, "Random pixels per frame per step, 0 = whole frame (default 256)");
  c_train->add_option("--progress", tr.progress, "Report every N steps (0 = silent)")->capture_default_str();
  c_train->add_option("--hidden", tr.hidden, "Hidden width (default 128)");
  c_train->add_option("--attention-dim", tr.attention_dim, "Attention width (default 32)");
  c_train->add_option("--grid", tr.grid, "Token grid side (default 8)");
  c_train->add_option("--levels", tr.levels, "Hash levels L (default 16)");
  c_train->add_option("--features", tr.features, "Features per level F (default 2)");
  c_train->add_option("--log2-table", tr.log2_table, "log2 of the table size T (default 14)");
  c_train->add_option("--r-min", tr.r_min, "Coarsest resolution (default 16)");
  c_train->add_option("--r-max", tr.r_max, "Finest resolution (default 512)");
  c_train->callback([&] { run = [&] { return cmd_train(tr, g); }; });

  SampleArgs sa;
  auto* c_sample = app.add_subcommand("sample", "Generate frames from a checkpoint with the Euler sampler");
  c_sample->add_option("--ckpt", sa.ckpt, "Checkpoint path")->required();
  c_sample->add_option("--data", sa.data, "Bundle supplying the masks and the first frame")->required();
  c_sample->add_option("--frame", sa.frame, "1-based frame to generate");
  c_sample->add_flag("--all", sa.all, "Generate every frame and write a bundle to --out");
  c_sample->add_option("--steps", sa.steps, "Euler steps")->capture_default_str();
  c_sample->add_option("--out", sa.out, "Output image (.pgm), or bundle directory with --all")->required();
  c_sample->callback([&] { run = [&] { return cmd_sample(sa, g); }; });

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Compare two bundles: flow consistency or landmark expression error");
  c_eval->add_option("--mode", ev.mode, "consistency | expression")
      ->required()
      ->check(CLI::IsMember({"consistency", "expression"}));
  c_eval->add_option("--ref", ev.ref, "Reference bundle")->required();
  c_eval->add_option("--pred", ev.pred, "Predicted or edited bundle")->required();
  c_eval->add_option("--out", ev.out, "Output CSV")->required();
  c_eval->callback([&] { run = [&] { return cmd_eval(ev, g); }; });

  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference gradient suites (uses --seed)");
  c_grad->callback([&] { run = [&] { return cmd_gradcheck(g); }; });

  ReproArgs rp;
  auto* c_repro = app.add_subcommand("repro", "gen, train, fine-tune, sample and evaluate into one directory");
  c_repro->add_option("--out", rp.out, "Output directory")->required();
  c_repro->add_option("--steps", rp.steps, "Phase 1 steps (default 3000)");
  c_repro->add_option("--finetune-steps", rp.finetune_steps, "Phase 2 steps (default 1000)");
  c_repro->add_flag("--no-dram", rp.no_dram, "Fine-tune without landmark re-weighting");
  c_repro->add_option("--jitter", rp.jitter, "Motion perturbation of the edited clip in px")->capture_default_str();
  c_repro->add_option("--sample-steps", rp.sample_steps, "Euler steps when sampling")->capture_default_str();
  c_repro->callback([&] { run = [&] { return cmd_repro(rp, g); }; });

  TrajArgs tj;
  auto* c_traj = app.add_subcommand("traj", "Export the trajectory map of one frame from a checkpoint's hash table");
  c_traj->add_option("--ckpt", tj.ckpt, "Checkpoint path")->required();
  c_traj->add_option("--data", tj.data, "Bundle supplying the mask")->required();
  c_traj->add_option("--frame", tj.frame, "1-based frame")->capture_default_str();
  c_traj->add_option("--out", tj.out, "Output .fyt file")->required();
  c_traj->callback([&] { run = [&] { return cmd_traj(tj, g); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  Eigen::setNbThreads(g.threads);
  try {
    return run();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
