// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fym/checks.hpp"
#include "fym/pipeline.hpp"
#include "oracle.hpp"

using namespace fym;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

char buf[512];

template <class... A>
std::string fmt(const char* f, A... a) {
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict hash_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  hashgrid::HashGridConfig c;
  c.levels = 2;
  c.features = 2;
  c.table_size = 16;
  std::vector<int> res;
  for (int l = 0; l < c.levels; ++l) res.push_back(hashgrid::level_resolution(c, l));
  std::mt19937_64 rng(1);
  const auto table = hashgrid::FeatureTable::random(c, 1.0, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng), y = u(rng), t = u(rng);
    const auto got = hashgrid::encode(table, {x, y, t});
    const auto want = oracle::brute_force_encode(c, table.values, x, y, t, res);
    for (std::size_t k = 0; k < got.size(); ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
  }
  const double s = seconds_since(t0);
  return {worst <= 1e-12 && s < 1.0, fmt("max |diff| %.2e over 1000 points (%.2f s)", worst, s)};
}

Verdict resolution_schedule() {
  const hashgrid::HashGridConfig c;
  bool monotone = true;
  for (int l = 1; l < c.levels; ++l) monotone &= hashgrid::level_resolution(c, l) >= hashgrid::level_resolution(c, l - 1);
  const int r0 = hashgrid::level_resolution(c, 0), r15 = hashgrid::level_resolution(c, 15);
  return {r0 == 16 && r15 == 512 && monotone, fmt("R_0=%d R_15=%d nondecreasing=%s", r0, r15, monotone ? "yes" : "no")};
}

Verdict gradient_suites() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  double worst = 0.0;
  std::string names;
  for (const auto& r : checks::all_suites(0)) {
    ok &= r.passed();
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed()) names += " " + r.name;
  }
  const double s = seconds_since(t0);
  return {ok && s < 30.0, fmt("max rel error %.2e (%.1f s)%s", worst, s, names.empty() ? "" : (" failing:" + names).c_str())};
}

Verdict flow_algebra() {
  const auto t0 = std::chrono::steady_clock::now();
  const flowmatch::CfmSchedule s;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(s.t_min(), s.t_max());
  double eps_err = 0.0, w_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> x0{n(rng)}, eps{n(rng)};
    const double t = u(rng);
    const auto z = flowmatch::noisy_sample(s, x0, eps, t);
    const auto v = flowmatch::velocity_target(s, x0, eps, t);
    eps_err = std::max(eps_err, std::abs(flowmatch::eps_from_velocity(s, v, z, t)[0] - eps[0]));
  }
  for (int i = 0; i < 100; ++i) {
    const double t = u(rng);
    const double want = 1.0 / ((1.0 - t) * (1.0 - t));
    w_err = std::max(w_err, std::abs(s.loss_weight(t) - want) / want);
  }
  const double sec = seconds_since(t0);
  return {eps_err <= 1e-12 && w_err <= 1e-12 && sec < 1.0,
          fmt("eps identity %.2e, weight rel %.2e (%.3f s)", eps_err, w_err, sec)};
}

Verdict trajectory_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(5);
  const auto table = hashgrid::FeatureTable::random(hashgrid::HashGridConfig{}, 0.5, rng);
  const auto clip = synth::generate({synth::MotionKind::orbit, {5.0, 0.25}, 5}, 16, 32, 32);
  bool first_zero = true, background_zero = true;
  for (double v : trajectory::trajectory_map(table, 1, clip.masks[0], 32, 32, 16).values) first_zero &= v == 0.0;
  for (int f = 2; f <= 16; ++f) {
    const auto m = trajectory::trajectory_map(table, f, clip.masks[f - 1], 32, 32, 16);
    for (std::size_t r = 0; r < 32; ++r) {
      for (std::size_t c = 0; c < 32; ++c) {
        if (clip.masks[f - 1].at(r, c)) continue;
        for (std::size_t k = 0; k < m.channels; ++k) background_zero &= m.pixel(r, c)[k] == 0.0;
      }
    }
  }
  const hashgrid::FeatureTable flat(hashgrid::HashGridConfig{}, 0.8);
  double flat_max = 0.0;
  for (int f = 1; f <= 16; ++f) {
    for (double v : trajectory::trajectory_map(flat, f, Mask(32, 32, 1), 32, 32, 16).values) flat_max = std::max(flat_max, std::abs(v));
  }
  const double s = seconds_since(t0);
  return {first_zero && background_zero && flat_max <= 1e-15 && s < 1.0,
          fmt("TRA_1 zero=%s background zero=%s constant-table max %.1e (%.2f s)", first_zero ? "yes" : "no",
              background_zero ? "yes" : "no", flat_max, s)};
}

Verdict flow_accuracy() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (Point2 v : {Point2{2, 0}, Point2{0, 3}}) {
    const auto fr = synth::textured_translation(32, 32, 2, v, 5);
    const auto f = metrics::optical_flow(fr[0], fr[1]);
    double e = 0.0;
    for (const Point2& d : f.pixels) e += std::hypot(d.x - v.x, d.y - v.y);
    worst = std::max(worst, e / static_cast<double>(f.size()));
  }
  const auto same = synth::textured_translation(32, 32, 1, {0, 0}, 6);
  double still = 0.0;
  for (const Point2& d : metrics::optical_flow(same[0], same[0]).pixels) still = std::max({still, std::abs(d.x), std::abs(d.y)});
  const double s = seconds_since(t0);
  return {worst <= 0.25 && still <= 1e-6 && s < 10.0,
          fmt("mean endpoint error %.4f px, identical frames %.1e (%.2f s)", worst, still, s)};
}

Verdict consistency_metric() {
  const std::vector<double> rendering{0.22, 0.46, 0.23, 0.03, 0.23, 0.17, 0.12, 0.20, 0.07, 0.04};
  const std::vector<double> ours{0.21, 0.25, 0.15, 0.06, 0.13, 0.09, 0.08, 0.16, 0.08, 0.03};
  const std::vector<double> portraitgen{0.13, 0.27, 0.05, 0.19, 0.12, 0.04, 0.05, 0.26, 0.04, 0.10};
  const double self = metrics::consistency_total_error(rendering, rendering);
  const double a = metrics::consistency_total_error(ours, rendering);
  const double b = metrics::consistency_total_error(portraitgen, rendering);
  return {self == 0.0 && std::abs(a - 0.61) < 1e-9 && std::abs(b - 1.08) < 1e-9,
          fmt("self %.2f, rendering/ours %.4f, rendering/portraitgen %.4f", self, a, b)};
}

Verdict zero_loss_neutrality() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto clip = synth::generate({}, 16, 32, 32);
  flowmatch::VelocityModel plain_model(flowmatch::ModelConfig{}, 3), dram_model(flowmatch::ModelConfig{}, 3);
  flowmatch::TrainConfig cfg = pipeline::reconstruction_config(3);
  cfg.steps = 2;
  flowmatch::Trainer plain(plain_model, clip, cfg);
  cfg.dram = true;
  flowmatch::Trainer reweighted(dram_model, clip, cfg);
  reweighted.set_detector([&](const Image&, int frame) { return clip.landmarks[frame - 1]; });
  const bool same_loss = plain.run() == reweighted.run();
  const bool same_params = plain_model.params() == dram_model.params();
  const double s = seconds_since(t0);
  return {same_loss && same_params, fmt("losses identical=%s parameters identical=%s (%.2f s)", same_loss ? "yes" : "no",
                                        same_params ? "yes" : "no", s)};
}

struct ReproRun {
  pipeline::ReproResult result;
  double seconds = 0.0;
};

ReproRun run_repro(const fs::path& dir) {
  fs::remove_all(dir);
  const auto t0 = std::chrono::steady_clock::now();
  ReproRun r;
  r.result = pipeline::run_repro(dir, pipeline::ReproOptions{});
  r.seconds = seconds_since(t0);
  return r;
}

Verdict reconstruction(const ReproRun& run) {
  const auto& losses = run.result.phase1_losses;
  const double ratio = flowmatch::smoothed_end(losses) / flowmatch::smoothed_start(losses);
  const int steps = static_cast<int>(losses.size());
  return {steps <= 20000 && run.result.mean_psnr >= 25.0 && ratio <= 0.5 && run.seconds <= 1800.0,
          fmt("%d steps, mean PSNR %.2f dB, smoothed loss ratio %.3f, repro wall time %.0f s", steps,
              run.result.mean_psnr, ratio, run.seconds)};
}

Verdict dram_effect(const fs::path& workdir) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path ck_path = workdir / "repro_a" / "phase1.fym";
  const io::Checkpoint base = io::read_checkpoint(ck_path);
  const synth::VideoBundle rendered = synth::generate(pipeline::ReproOptions{}.motion, 16, 32, 32);
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto edited = pipeline::make_edited(rendered, 2.0, {synth::EditKind::recolor, 2.0}, 100 + seed);
    double ee[2] = {0.0, 0.0};
    for (int dram = 0; dram <= 1; ++dram) {
      flowmatch::VelocityModel model = io::load_model(base, ck_path);
      flowmatch::Trainer trainer(model, edited, pipeline::finetune_config(seed, dram == 1), rendered.landmarks);
      trainer.run();
      const auto frames = pipeline::sample_clip(model, edited, 50, 7);
      ee[dram] = metrics::expression_error(rendered.landmarks, pipeline::detect_landmarks(frames));
    }
    wins += ee[1] <= ee[0];
    detail += fmt(" seed %d: %.3f vs %.3f;", static_cast<int>(seed), ee[1], ee[0]);
  }
  const double s = seconds_since(t0);
  return {wins >= 2 && s <= 3600.0, fmt("EE with vs without DRAM,%s %d/3 seeds (%.0f s)", detail.c_str(), wins, s)};
}

Verdict reproducibility(const fs::path& workdir) {
  run_repro(workdir / "repro_b");
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(workdir / "repro_a")) {
    const auto ext = e.path().extension();
    if (!e.is_regular_file() || (ext != ".fym" && ext != ".csv")) continue;
    const fs::path other = workdir / "repro_b" / fs::relative(e.path(), workdir / "repro_a");
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };
    ++compared;
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) differing.push_back(e.path().filename().string());
  }
  std::string d = fmt("%zu checkpoint/CSV files compared, %zu differ", compared, differing.size());
  for (const auto& n : differing) d += " " + n;
  return {compared >= 8 && differing.empty(), d};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory for the pipeline runs")->capture_default_str();
  app.add_option("--only", only, "Run just these criteria (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> pick(only.begin(), only.end());
  auto wanted = [&](int n) { return pick.empty() || pick.count(n) > 0; };
  const fs::path wd(workdir);
  fs::create_directories(wd);

  std::optional<ReproRun> repro_a;
  auto first_repro = [&]() -> const ReproRun& {
    if (!repro_a) repro_a = run_repro(wd / "repro_a");
    return *repro_a;
  };

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"hash-encoding oracle equivalence", hash_oracle},
      {"resolution schedule", resolution_schedule},
      {"gradient suites", gradient_suites},
      {"flow-matching algebra", flow_algebra},
      {"trajectory invariants", trajectory_invariants},
      {"reconstruction run", [&] { return reconstruction(first_repro()); }},
      {"optical-flow accuracy", flow_accuracy},
      {"consistency metric", consistency_metric},
      {"landmark re-weighting lowers expression error",
       [&] {
         first_repro();
         return dram_effect(wd);
       }},
      {"zero-loss neutrality", zero_loss_neutrality},
      {"reproducibility",
       [&] {
         first_repro();
         return reproducibility(wd);
       }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!wanted(n)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("[%s] %2d %s: %s\n", v.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
