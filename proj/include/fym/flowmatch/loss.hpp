#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fym/flowmatch/model.hpp"
#include "fym/flowmatch/schedule.hpp"
#include "fym/synth.hpp"

namespace fym::flowmatch {

/// Differentiable tokens for frame `frame` of a clip, built from the model's hash table.
inline Var frame_tokens(Tape& tape, const VelocityModel& model, const Mask& mask, int frame, int frame_count,
                        const std::vector<double>& token_weights) {
  const ModelConfig& c = model.config();
  return trajectory::token_features(tape.param(model.params(), model.table_id()), c.hash, frame, frame_count, mask,
                                    c.grid_h, c.grid_w, token_weights);
}

inline std::vector<double> unit_weights(const ModelConfig& c) { return std::vector<double>(c.grid_h * c.grid_w, 1.0); }

struct CfmTerms {
  Var loss;
  std::vector<double> noisy;     // z over the evaluated pixels
  std::vector<double> eps_pred;  // eps_theta over the evaluated pixels
};

/// (-b_t lambda'_t / 2)^2 * mean ||eps_theta(z, t, tokens, first) - eps||^2, where eps_theta is
/// recovered from the predicted velocity. Evaluated on `pixels` (all pixels when empty).
inline CfmTerms cfm_loss(Tape& tape, const VelocityModel& model, const CfmSchedule& schedule,
                         std::span<const double> x0, Var tokens, std::span<const double> first, double t,
                         std::span<const double> eps, std::span<const std::size_t> pixels = {}) {
  std::string stage = "schedule";
  try {
    const double weight = schedule.loss_weight(t);
    const auto [cv, cz] = schedule.eps_coefficients(t);
    stage = "noising";
    const std::vector<double> z = noisy_sample(schedule, x0, eps, t);
    const std::size_t n = pixels.empty() ? z.size() : pixels.size();
    Array z_sel(tensor::Shape{n, 1});
    Array eps_sel(tensor::Shape{n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t p = pixels.empty() ? i : pixels[i];
      z_sel[i] = cz * z.at(p);
      eps_sel[i] = eps[p];
    }
    stage = "velocity";
    Var v = model.forward(tape, z, t, first, tokens, pixels);
    stage = "reparameterization";
    Var eps_pred = tensor::add(tensor::scale(v, cv), tape.constant(std::move(z_sel)));
    stage = "loss";
    Var loss = tensor::scale(tensor::squared_error(eps_pred, tape.constant(std::move(eps_sel))), weight);
    CfmTerms out{loss, {}, {}};
    out.noisy.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.noisy.push_back(z[pixels.empty() ? i : pixels[i]]);
    const auto ep = eps_pred.value().data();
    out.eps_pred.assign(ep.begin(), ep.end());
    return out;
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("cfm_loss: stage '" + stage + "' rejected: " + e.what());
  }
}

/// x0 estimate implied by an eps prediction: (z - b_t eps) / a_t.
inline std::vector<double> predict_clean(const CfmSchedule& schedule, std::span<const double> z,
                                         std::span<const double> eps_pred, double t) {
  const ScheduleValues s = schedule.eval(t);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = (z[i] - s.b * eps_pred[i]) / s.a;
  return out;
}

}  // namespace fym::flowmatch
