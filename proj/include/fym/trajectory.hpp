#pragma once

// Per-frame trajectory maps (encoding differences against the first frame) and their
// pooled token form used as conditioning.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "fym/hashgrid.hpp"
#include "fym/image.hpp"
#include "fym/tensor/ops.hpp"

namespace fym::trajectory {

using hashgrid::HashGridConfig;
using hashgrid::SpacePoint;
using tensor::Array;

/// H x W x C features for one frame (C = levels * features), row-major with channels innermost.
struct TrajectoryMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  int frame = 1;
  std::vector<double> values;

  double* pixel(std::size_t r, std::size_t c) { return values.data() + (r * width + c) * channels; }
  const double* pixel(std::size_t r, std::size_t c) const { return values.data() + (r * width + c) * channels; }

  friend bool operator==(const TrajectoryMap&, const TrajectoryMap&) = default;
};

inline SpacePoint pixel_point(std::size_t row, std::size_t col, std::size_t height, std::size_t width, double tau) {
  const double x = width > 1 ? static_cast<double>(col) / static_cast<double>(width - 1) : 0.0;
  const double y = height > 1 ? static_cast<double>(row) / static_cast<double>(height - 1) : 0.0;
  return {x, y, tau};
}

inline void check_frame(int frame, int frame_count) {
  if (frame_count < 1 || frame < 1 || frame > frame_count) {
    throw std::invalid_argument("trajectory: frame " + std::to_string(frame) + " outside 1.." + std::to_string(frame_count));
  }
}

inline void check_mask(const Mask& mask, std::size_t height, std::size_t width) {
  if (!mask.same_dims(height, width)) {
    throw std::invalid_argument("trajectory: mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                                ", expected " + std::to_string(height) + "x" + std::to_string(width));
  }
}

/// TRA_i(x, y) = H(x, y, tau_i) - H(x, y, 0) on foreground pixels, zero elsewhere.
inline TrajectoryMap trajectory_map(const HashGridConfig& config, const Array& table, int frame, const Mask& mask,
                                    std::size_t height, std::size_t width, int frame_count) {
  check_frame(frame, frame_count);
  check_mask(mask, height, width);
  hashgrid::table_shape_check(config, table);
  const double tau = hashgrid::frame_tau(frame, frame_count);
  TrajectoryMap m{height, width, static_cast<std::size_t>(config.width()), frame, {}};
  m.values.assign(height * width * m.channels, 0.0);
  std::vector<double> now(m.channels);
  std::vector<double> first(m.channels);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      if (!mask.at(r, c)) continue;
      hashgrid::encode(config, table, pixel_point(r, c, height, width, tau), now);
      hashgrid::encode(config, table, pixel_point(r, c, height, width, 0.0), first);
      double* out = m.pixel(r, c);
      for (std::size_t k = 0; k < m.channels; ++k) out[k] = now[k] - first[k];
    }
  }
  return m;
}

inline TrajectoryMap trajectory_map(const hashgrid::FeatureTable& table, int frame, const Mask& mask,
                                    std::size_t height, std::size_t width, int frame_count) {
  return trajectory_map(table.config, table.values, frame, mask, height, width, frame_count);
}

/// [x, y, sin(2^k pi x), cos(2^k pi x), sin(2^k pi y), cos(2^k pi y)] for k < frequencies.
inline std::vector<double> position_embedding(double x, double y, int frequencies) {
  std::vector<double> out{x, y};
  for (int k = 0; k < frequencies; ++k) {
    const double f = std::numbers::pi * static_cast<double>(1 << k);
    out.push_back(std::sin(f * x));
    out.push_back(std::cos(f * x));
    out.push_back(std::sin(f * y));
    out.push_back(std::cos(f * y));
  }
  return out;
}

inline std::size_t position_width(int frequencies) { return 2 + 4 * static_cast<std::size_t>(frequencies); }

inline constexpr int kTokenFrequencies = 3;

/// Conditioning tokens for one frame, row-major over the token grid.
struct TrajectoryTokens {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  Array positions;  // M x position_width
  Array features;   // M x C
  std::vector<double> weights;

  std::size_t count() const noexcept { return grid_h * grid_w; }
};

inline void check_grid(std::size_t height, std::size_t width, std::size_t grid_h, std::size_t grid_w) {
  if (grid_h == 0 || grid_w == 0 || height % grid_h != 0 || width % grid_w != 0) {
    throw std::invalid_argument("trajectory: token grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                                " does not divide " + std::to_string(height) + "x" + std::to_string(width));
  }
}

/// Normalized cell-center position embeddings for a token grid.
inline Array token_positions(std::size_t grid_h, std::size_t grid_w) {
  Array pos = Array::matrix(grid_h * grid_w, position_width(kTokenFrequencies));
  for (std::size_t gr = 0; gr < grid_h; ++gr) {
    for (std::size_t gc = 0; gc < grid_w; ++gc) {
      const auto e = position_embedding((gc + 0.5) / grid_w, (gr + 0.5) / grid_h, kTokenFrequencies);
      std::copy(e.begin(), e.end(), pos.ptr() + (gr * grid_w + gc) * pos.cols());
    }
  }
  return pos;
}

/// Average-pools the map over token cells; weights start at 1.
inline TrajectoryTokens downsample_to_tokens(const TrajectoryMap& map, std::size_t grid_h, std::size_t grid_w) {
  check_grid(map.height, map.width, grid_h, grid_w);
  const std::size_t ch = map.height / grid_h;
  const std::size_t cw = map.width / grid_w;
  TrajectoryTokens t;
  t.grid_h = grid_h;
  t.grid_w = grid_w;
  t.positions = token_positions(grid_h, grid_w);
  t.features = Array::matrix(grid_h * grid_w, map.channels);
  t.weights.assign(grid_h * grid_w, 1.0);
  const double inv = 1.0 / static_cast<double>(ch * cw);
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      const std::size_t tok = (r / ch) * grid_w + c / cw;
      const double* src = map.pixel(r, c);
      for (std::size_t k = 0; k < map.channels; ++k) t.features.at(tok, k) += src[k] * inv;
    }
  }
  return t;
}

/// Scales each token's trajectory feature by its weight; positions are untouched.
inline TrajectoryTokens apply_token_weights(const TrajectoryTokens& tokens, const std::vector<double>& weights) {
  if (weights.size() != tokens.count()) {
    throw std::invalid_argument("trajectory: " + std::to_string(weights.size()) + " weights for " +
                                std::to_string(tokens.count()) + " tokens");
  }
  TrajectoryTokens out = tokens;
  for (std::size_t m = 0; m < out.count(); ++m) {
    if (!(weights[m] >= 0.0) || !std::isfinite(weights[m])) throw std::invalid_argument("trajectory: token weight must be >= 0");
    out.weights[m] = weights[m];
    for (std::size_t k = 0; k < out.features.cols(); ++k) out.features.at(m, k) *= weights[m];
  }
  return out;
}

/// Differentiable token features (M x C) for frame `frame`: the same computation as
/// trajectory_map -> downsample_to_tokens -> apply_token_weights, recorded on the tape so
/// gradients reach the hash table.
inline tensor::Var token_features(tensor::Var table, const HashGridConfig& config, int frame, int frame_count,
                                  const Mask& mask, std::size_t grid_h, std::size_t grid_w,
                                  const std::vector<double>& weights) {
  check_frame(frame, frame_count);
  check_grid(mask.height, mask.width, grid_h, grid_w);
  const std::size_t tokens = grid_h * grid_w;
  if (weights.size() != tokens) throw std::invalid_argument("trajectory: token weight count mismatch");
  const std::size_t ch = mask.height / grid_h;
  const std::size_t cw = mask.width / grid_w;
  const double tau = hashgrid::frame_tau(frame, frame_count);
  std::vector<SpacePoint> now;
  std::vector<SpacePoint> first;
  std::vector<std::size_t> cell;
  for (std::size_t r = 0; r < mask.height; ++r) {
    for (std::size_t c = 0; c < mask.width; ++c) {
      if (!mask.at(r, c)) continue;
      now.push_back(pixel_point(r, c, mask.height, mask.width, tau));
      first.push_back(pixel_point(r, c, mask.height, mask.width, 0.0));
      cell.push_back((r / ch) * grid_w + c / cw);
    }
  }
  tensor::Tape& tape = *table.tape;
  const std::size_t width = static_cast<std::size_t>(config.width());
  if (now.empty()) return tape.constant(Array::matrix(tokens, width));
  Array pool = Array::matrix(tokens, now.size());
  const double inv = 1.0 / static_cast<double>(ch * cw);
  for (std::size_t p = 0; p < cell.size(); ++p) pool.at(cell[p], p) = inv;
  tensor::Var diff = tensor::sub(hashgrid::encode_points(table, config, now), hashgrid::encode_points(table, config, first));
  tensor::Var pooled = tensor::matmul(tape.constant(std::move(pool)), diff);
  Array scale = Array::matrix(tokens, width);
  for (std::size_t m = 0; m < tokens; ++m) {
    for (std::size_t k = 0; k < width; ++k) scale.at(m, k) = weights[m];
  }
  return tensor::mul(pooled, tape.constant(std::move(scale)));
}

}  // namespace fym::trajectory
