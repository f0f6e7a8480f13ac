#pragma once

// Finite-difference gradient suites shared by `fym gradcheck` and the acceptance run.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fym/flowmatch/loss.hpp"
#include "fym/tensor/gradcheck.hpp"

namespace fym::checks {

inline constexpr double kGradTolerance = 1e-3;
inline constexpr double kGradStep = 1e-5;

struct SuiteResult {
  std::string name;
  std::size_t probes = 0;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  bool deterministic = true;

  bool passed() const { return deterministic && probes > 0 && max_rel_error <= kGradTolerance; }
};

namespace detail {

inline SuiteResult summarize(std::string name, const tensor::GradCheckReport& r) {
  return {std::move(name), r.results.size(), r.max_rel_error, r.mean_rel_error, r.deterministic};
}

template <class Rng>
tensor::Array random_array(tensor::Shape shape, double scale, Rng& rng) {
  tensor::Array a(std::move(shape), 0.0);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : a.data()) v = n(rng);
  return a;
}

/// Entries whose analytic gradient is nonzero, i.e. the ones the loss actually reads.
inline std::vector<tensor::Probe> touched_entries(const tensor::LossBuilder& fn, const tensor::ParamStore& store,
                                                  std::size_t param) {
  const tensor::GradMap g = tensor::analytic_gradients(fn, store);
  std::vector<tensor::Probe> out;
  for (std::size_t i = 0; i < g[param].size(); ++i) {
    if (g[param][i] != 0.0) out.push_back({param, i});
  }
  return out;
}

template <class Rng>
std::vector<tensor::Probe> pick(std::vector<tensor::Probe> all, std::size_t count, Rng& rng) {
  std::shuffle(all.begin(), all.end(), rng);
  if (all.size() > count) all.resize(count);
  return all;
}

}  // namespace detail

/// matmul, affine, silu, tanh, attention, softmax, add/sub/mul, mean and squared error in one graph.
inline SuiteResult tensor_ops_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  tensor::ParamStore store;
  store.add("w1", detail::random_array({3, 5}, 0.6, rng));
  store.add("b1", detail::random_array({5}, 0.3, rng));
  store.add("wq", detail::random_array({5, 4}, 0.5, rng));
  store.add("tokens", detail::random_array({4, 3}, 1.0, rng));
  store.add("wk", detail::random_array({3, 4}, 0.5, rng));
  store.add("wv", detail::random_array({3, 4}, 0.5, rng));
  const tensor::Array x = detail::random_array({6, 3}, 1.0, rng);
  const tensor::Array target = detail::random_array({6, 4}, 0.2, rng);
  const tensor::LossBuilder fn = [&](tensor::Tape& tape, const tensor::ParamStore& s) {
    using namespace tensor;
    Var h = silu(affine(tape.constant(x), tape.param(s, "w1"), tape.param(s, "b1")));
    Var q = matmul(h, tape.param(s, "wq"));
    Var tok = tape.param(s, "tokens");
    Var a = attention(q, matmul(tok, tape.param(s, "wk")), matmul(tok, tape.param(s, "wv")));
    Var o = sub(mul(tanh(a), a), scale(a, 0.3));
    return add(squared_error(softmax(o), tape.constant(target)), mean(o));
  };
  std::vector<std::size_t> ids(store.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const auto probes = tensor::random_probes(store, ids, 50, rng);
  return detail::summarize("tensor ops", tensor::finite_diff_check(fn, store, probes, kGradStep));
}

/// encode w.r.t. table entries: every entry of a small table, then touched entries of the default table.
inline std::vector<SuiteResult> encode_suites(std::uint64_t seed) {
  std::vector<SuiteResult> out;
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto run = [&](std::string name, const hashgrid::HashGridConfig& cfg, std::size_t points, bool all_entries) {
    tensor::ParamStore store;
    store.add("table", hashgrid::FeatureTable::random(cfg, 0.5, rng).values);
    std::vector<hashgrid::SpacePoint> pts(points);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    const tensor::Array upstream = detail::random_array({points, static_cast<std::size_t>(cfg.width())}, 1.0, rng);
    const tensor::LossBuilder fn = [&](tensor::Tape& tape, const tensor::ParamStore& s) {
      using namespace tensor;
      return sum(mul(hashgrid::encode_points(tape.param(s, std::size_t{0}), cfg, pts), tape.constant(upstream)));
    };
    std::vector<tensor::Probe> probes;
    if (all_entries) {
      for (std::size_t i = 0; i < store.value(0).size(); ++i) probes.push_back({0, i});
    } else {
      probes = detail::pick(detail::touched_entries(fn, store, 0), 50, rng);
    }
    out.push_back(detail::summarize(std::move(name), tensor::finite_diff_check(fn, store, probes, kGradStep)));
  };
  hashgrid::HashGridConfig small;
  small.levels = 2;
  small.features = 2;
  small.table_size = 16;
  small.r_min = 2.0;
  small.r_max = 4.0;
  run("encode (L=2, T=16, all entries)", small, 200, true);
  run("encode (default grid)", hashgrid::HashGridConfig{}, 200, false);
  return out;
}

/// cfm_loss on a 32x32 synthetic frame with non-unit token weights: 50 random model parameters
/// (pixel subset path), then 50 random table entries among those the loss reads (full frame).
inline std::vector<SuiteResult> cfm_suites(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 2);
  flowmatch::ModelConfig mc;
  mc.hidden = 16;
  mc.attention_dim = 8;
  mc.grid_h = 4;
  mc.grid_w = 4;
  const synth::VideoBundle clip = synth::generate({synth::MotionKind::translate, {2.0, 1.0}, seed}, 6, 32, 32);
  flowmatch::VelocityModel model(mc, seed);
  const flowmatch::CfmSchedule schedule;
  const int frame = 4;
  std::uniform_real_distribution<double> w(1.0, 3.0);
  std::vector<double> token_weights(mc.grid_h * mc.grid_w);
  for (auto& v : token_weights) v = w(rng);
  std::vector<double> eps(mc.pixels());
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : eps) v = n(rng);
  std::vector<std::size_t> subset;
  for (std::size_t p = 0; p < mc.pixels(); p += 7) subset.push_back(p);

  auto builder = [&](std::span<const std::size_t> pixels, double t) -> tensor::LossBuilder {
    return [&, pixels, t](tensor::Tape& tape, const tensor::ParamStore&) {
      tensor::Var tokens = flowmatch::frame_tokens(tape, model, clip.masks[frame - 1], frame,
                                                   static_cast<int>(clip.frame_count()), token_weights);
      return flowmatch::cfm_loss(tape, model, schedule, clip.frames[frame - 1].pixels, tokens,
                                 clip.frames.front().pixels, t, eps, pixels)
          .loss;
    };
  };

  std::vector<SuiteResult> out;
  tensor::ParamStore& store = model.params();
  std::vector<std::size_t> dense;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (i != model.table_id()) dense.push_back(i);
  }
  const auto fn_model = builder(subset, 0.37);
  const auto model_probes = tensor::random_probes(store, dense, 50, rng);
  out.push_back(detail::summarize("cfm_loss (model parameters)",
                                  tensor::finite_diff_check(fn_model, store, model_probes, kGradStep)));

  const auto fn_table = builder({}, 0.61);
  const auto table_probes = detail::pick(detail::touched_entries(fn_table, store, model.table_id()), 50, rng);
  out.push_back(detail::summarize("cfm_loss (table entries)",
                                  tensor::finite_diff_check(fn_table, store, table_probes, kGradStep)));
  return out;
}

inline std::vector<SuiteResult> all_suites(std::uint64_t seed) {
  std::vector<SuiteResult> out{tensor_ops_suite(seed)};
  for (auto& r : encode_suites(seed)) out.push_back(std::move(r));
  for (auto& r : cfm_suites(seed)) out.push_back(std::move(r));
  return out;
}

}  // namespace fym::checks
