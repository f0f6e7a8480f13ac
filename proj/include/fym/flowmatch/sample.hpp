#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fym/flowmatch/loss.hpp"

namespace fym::flowmatch {

/// Token features for a frame with the table held fixed.
inline Array fixed_tokens(const VelocityModel& model, const Mask& mask, int frame, int frame_count,
                          const std::vector<double>& token_weights) {
  Tape tape(false);
  return frame_tokens(tape, model, mask, frame, frame_count, token_weights).value();
}

/// Explicit Euler integration of dz/dt = v(z, t) from t = 1 - t_min (pure noise) down to t_min.
inline Image sample_frame(const VelocityModel& model, const CfmSchedule& schedule, const Array& tokens,
                          const Image& first, int steps, std::uint64_t seed) {
  if (steps < 1) throw std::invalid_argument("sample: steps must be >= 1");
  const ModelConfig& c = model.config();
  if (!first.same_dims(c.height, c.width)) throw std::invalid_argument("sample: first frame has wrong dimensions");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(c.pixels());
  for (auto& v : z) v = normal(rng);
  const double dt = (schedule.t_max() - schedule.t_min()) / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = schedule.t_max() - k * dt;
    try {
      Tape tape(false);
      Var v = model.forward(tape, z, t, first.pixels, tape.constant(tokens));
      const auto vel = v.value().data();
      for (std::size_t i = 0; i < z.size(); ++i) z[i] -= dt * vel[i];
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("sample: integration step " + std::to_string(k) + " failed: " + e.what());
    }
    for (double v : z) {
      if (!std::isfinite(v)) throw std::runtime_error("sample: non-finite state at integration step " + std::to_string(k));
    }
  }
  Image out(c.height, c.width);
  out.pixels = std::move(z);
  return out;
}

/// Samples frame `frame` of a clip conditioned on its mask-derived trajectory and the first frame.
inline Image sample_clip_frame(const VelocityModel& model, const CfmSchedule& schedule, const Mask& mask, int frame,
                               int frame_count, const Image& first, int steps, std::uint64_t seed) {
  const Array tokens = fixed_tokens(model, mask, frame, frame_count, unit_weights(model.config()));
  return sample_frame(model, schedule, tokens, first, steps, seed);
}

}  // namespace fym::flowmatch
