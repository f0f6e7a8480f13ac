#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "fym/tensor/tape.hpp"

namespace fym::tensor {

/// Builds a scalar loss on `tape` from the parameters in `store`. Must be deterministic.
using LossBuilder = std::function<Var(Tape& tape, const ParamStore& store)>;

struct Probe {
  std::size_t param = 0;
  std::size_t index = 0;
};

struct ProbeResult {
  Probe probe;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<ProbeResult> results;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  bool deterministic = true;

  bool passed(double tolerance) const { return deterministic && max_rel_error <= tolerance; }
};

/// Relative error with a floor on the denominator, so two near-zero gradients compare as equal.
inline double relative_error(double a, double b, double floor = 1e-7) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double evaluate_loss(const LossBuilder& fn, const ParamStore& store) {
  Tape tape(false);
  return fn(tape, store).value().item();
}

inline GradMap analytic_gradients(const LossBuilder& fn, const ParamStore& store) {
  Tape tape(true);
  Var loss = fn(tape, store);
  return tape.backward(loss, store);
}

/// Compares tape gradients against central differences at each probe. The store is restored
/// exactly after every perturbation.
inline GradCheckReport finite_diff_check(const LossBuilder& fn, ParamStore& store, std::span<const Probe> probes,
                                         double h = 1e-5) {
  GradCheckReport report;
  const double base_a = evaluate_loss(fn, store);
  const double base_b = evaluate_loss(fn, store);
  report.deterministic = base_a == base_b;
  const GradMap grads = analytic_gradients(fn, store);
  double total = 0.0;
  for (const Probe& probe : probes) {
    double& slot = store.value(probe.param)[probe.index];
    const double saved = slot;
    slot = saved + h;
    const double plus = evaluate_loss(fn, store);
    slot = saved - h;
    const double minus = evaluate_loss(fn, store);
    slot = saved;
    ProbeResult r;
    r.probe = probe;
    r.analytic = grads[probe.param][probe.index];
    r.numeric = (plus - minus) / (2.0 * h);
    r.rel_error = relative_error(r.analytic, r.numeric);
    report.max_rel_error = std::max(report.max_rel_error, r.rel_error);
    total += r.rel_error;
    report.results.push_back(r);
  }
  if (!probes.empty()) report.mean_rel_error = total / static_cast<double>(probes.size());
  return report;
}

/// Uniformly random probes over the parameters listed in `params`.
template <class Rng>
std::vector<Probe> random_probes(const ParamStore& store, std::span<const std::size_t> params, std::size_t count,
                                 Rng& rng) {
  std::size_t total = 0;
  for (auto p : params) total += store.value(p).size();
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::vector<Probe> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t flat = pick(rng);
    for (auto p : params) {
      if (flat < store.value(p).size()) {
        out.push_back({p, flat});
        break;
      }
      flat -= store.value(p).size();
    }
  }
  return out;
}

}  // namespace fym::tensor
