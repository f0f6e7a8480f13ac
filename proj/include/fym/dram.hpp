#pragma once

// Dynamic re-weighting of trajectory conditioning from per-landmark losses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fym/image.hpp"

namespace fym::dram {

/// Ordered landmark coordinates of one frame, in pixels.
using LandmarkSet = std::vector<Point2>;

/// Per-pixel attention weight factors. All ones until a landmark loss raises a pixel.
using WeightMatrix = Grid<double>;

struct LandmarkLoss {
  Point2 at;         // reference landmark position
  double loss = 0.0; // squared distance
};

using LandmarkLossField = std::vector<LandmarkLoss>;

inline WeightMatrix init_weights(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw std::invalid_argument("dram: weight matrix needs positive dimensions");
  return WeightMatrix(height, width, 1.0);
}

/// (dx)^2 + (dy)^2 per corresponding point, attached at the reference point.
inline LandmarkLossField landmark_loss(const LandmarkSet& reference, const LandmarkSet& predicted) {
  if (reference.size() != predicted.size()) {
    throw std::invalid_argument("dram: landmark count mismatch (" + std::to_string(reference.size()) + " vs " +
                                std::to_string(predicted.size()) + ")");
  }
  LandmarkLossField out;
  out.reserve(reference.size());
  for (std::size_t m = 0; m < reference.size(); ++m) {
    const double dx = reference[m].x - predicted[m].x;
    const double dy = reference[m].y - predicted[m].y;
    out.push_back({reference[m], dx * dx + dy * dy});
  }
  return out;
}

/// Pixel nearest to a landmark, clamped into the grid.
inline std::pair<std::size_t, std::size_t> nearest_pixel(const Point2& p, std::size_t height, std::size_t width) {
  const auto clamp_index = [](double v, std::size_t n) {
    const double r = std::round(v);
    return static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(n - 1)));
  };
  return {clamp_index(p.y, height), clamp_index(p.x, width)};
}

/// Reset-then-set: every pixel returns to 1, then each landmark's nearest pixel becomes 1 + loss.
/// Landmarks sharing a pixel keep the largest factor.
inline WeightMatrix update_weights(const WeightMatrix& previous, const LandmarkLossField& losses) {
  WeightMatrix w = init_weights(previous.height, previous.width);
  for (const auto& l : losses) {
    if (!(l.loss >= 0.0) || !std::isfinite(l.loss)) throw std::invalid_argument("dram: landmark loss must be finite and >= 0");
    if (l.at.x < -0.5 || l.at.y < -0.5 || l.at.x > previous.width - 0.5 || l.at.y > previous.height - 0.5) {
      throw std::invalid_argument("dram: landmark outside the weight grid");
    }
    const auto [r, c] = nearest_pixel(l.at, w.height, w.width);
    w.at(r, c) = std::max(w.at(r, c), 1.0 + l.loss);
  }
  return w;
}

/// Mean-pools a weight matrix onto a token grid, row-major over token cells.
inline std::vector<double> pool_weights(const WeightMatrix& w, std::size_t grid_h, std::size_t grid_w) {
  if (grid_h == 0 || grid_w == 0 || w.height % grid_h != 0 || w.width % grid_w != 0) {
    throw std::invalid_argument("dram: token grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                                " does not divide " + std::to_string(w.height) + "x" + std::to_string(w.width));
  }
  const std::size_t ch = w.height / grid_h;
  const std::size_t cw = w.width / grid_w;
  std::vector<double> out(grid_h * grid_w, 0.0);
  for (std::size_t r = 0; r < w.height; ++r) {
    for (std::size_t c = 0; c < w.width; ++c) out[(r / ch) * grid_w + c / cw] += w.at(r, c);
  }
  for (auto& v : out) v /= static_cast<double>(ch * cw);
  return out;
}

struct DramStepResult {
  WeightMatrix weights;
  std::vector<double> token_weights;
  bool used_previous = false;
};

/// One re-weighting step: landmark loss, weight update, and pooling to the token grid.
/// Missing landmarks keep the previous matrix and report through `warn`.
inline DramStepResult dram_step(const WeightMatrix& previous, const std::optional<LandmarkSet>& predicted,
                                const std::optional<LandmarkSet>& reference, std::size_t grid_h, std::size_t grid_w,
                                const std::function<void(const std::string&)>& warn = {}) {
  DramStepResult out;
  if (!predicted || !reference) {
    if (warn) warn("dram: landmarks missing for this frame; keeping previous weights");
    out.weights = previous;
    out.used_previous = true;
  } else {
    out.weights = update_weights(previous, landmark_loss(*reference, *predicted));
  }
  out.token_weights = pool_weights(out.weights, grid_h, grid_w);
  return out;
}

}  // namespace fym::dram
