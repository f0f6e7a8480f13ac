#pragma once

// Multi-resolution 3D hash encoding of (x, y, frame) coordinates with learnable per-level tables.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fym/tensor/ops.hpp"

namespace fym::hashgrid {

using tensor::Array;

struct HashGridConfig {
  int levels = 16;
  int features = 2;
  std::uint64_t table_size = std::uint64_t{1} << 14;
  double r_min = 16.0;
  double r_max = 512.0;
  std::array<std::uint64_t, 3> primes{1u, 2654435761u, 805459861u};

  int width() const noexcept { return levels * features; }

  void validate() const {
    if (levels < 1) throw std::invalid_argument("hashgrid: levels must be >= 1");
    if (features < 1) throw std::invalid_argument("hashgrid: features must be >= 1");
    if (table_size < 2 || !std::has_single_bit(table_size)) {
      throw std::invalid_argument("hashgrid: table size must be a power of two >= 2, got " + std::to_string(table_size));
    }
    if (!(r_min >= 1.0) || !(r_max >= r_min) || !std::isfinite(r_max)) {
      throw std::invalid_argument("hashgrid: need 1 <= r_min <= r_max");
    }
    if (primes[0] == primes[1] || primes[0] == primes[2] || primes[1] == primes[2]) {
      throw std::invalid_argument("hashgrid: hashing primes must be pairwise distinct");
    }
  }

  friend bool operator==(const HashGridConfig&, const HashGridConfig&) = default;
};

/// Normalized spatio-temporal coordinate; every component lies in [0, 1].
struct SpacePoint {
  double x = 0.0;
  double y = 0.0;
  double tau = 0.0;
};

/// Normalized time coordinate of frame i (1-based) in a clip of K frames.
inline double frame_tau(int frame, int frame_count) {
  if (frame < 1 || frame > frame_count) {
    throw std::invalid_argument("hashgrid: frame " + std::to_string(frame) + " outside 1.." + std::to_string(frame_count));
  }
  return frame_count == 1 ? 0.0 : static_cast<double>(frame - 1) / static_cast<double>(frame_count - 1);
}

/// Grid resolution of level l: floor(r_min * n^l), n = exp((ln r_max - ln r_min) / (L - 1)).
inline int level_resolution(const HashGridConfig& config, int level) {
  if (level < 0 || level >= config.levels) {
    throw std::invalid_argument("hashgrid: level " + std::to_string(level) + " outside 0.." +
                                std::to_string(config.levels - 1));
  }
  if (config.levels == 1) return static_cast<int>(std::floor(config.r_min));
  const double growth = std::exp((std::log(config.r_max) - std::log(config.r_min)) / (config.levels - 1));
  const double raw = config.r_min * std::pow(growth, level);
  // exp/log round-off leaves exact integers such as 16 * 32 a few ulps short of 512.
  return static_cast<int>(std::floor(raw * (1.0 + 1e-12)));
}

struct Corners {
  std::array<std::array<std::uint64_t, 3>, 8> vertex{};
  std::array<double, 8> weight{};
};

/// The 8 lattice corners around p * resolution (floor and ceil per axis) with trilinear weights.
/// Corner c takes the upper coordinate on axis a when bit a of c is set.
inline Corners corner_coords(const SpacePoint& p, int resolution) {
  const std::array<double, 3> scaled{p.x * resolution, p.y * resolution, p.tau * resolution};
  std::array<std::uint64_t, 3> lo{};
  std::array<std::uint64_t, 3> hi{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor(scaled[a]);
    lo[a] = static_cast<std::uint64_t>(f);
    hi[a] = static_cast<std::uint64_t>(std::ceil(scaled[a]));
    frac[a] = scaled[a] - f;
  }
  Corners out;
  for (int c = 0; c < 8; ++c) {
    double w = 1.0;
    for (int a = 0; a < 3; ++a) {
      const bool upper = (c >> a) & 1;
      out.vertex[c][a] = upper ? hi[a] : lo[a];
      w *= upper ? frac[a] : 1.0 - frac[a];
    }
    out.weight[c] = w;
  }
  return out;
}

/// (x1*pi1 XOR x2*pi2 XOR x3*pi3) mod T with wrapping 64-bit multiplication.
inline std::uint64_t hash_index(const std::array<std::uint64_t, 3>& corner, const HashGridConfig& config) {
  const std::uint64_t h = (corner[0] * config.primes[0]) ^ (corner[1] * config.primes[1]) ^ (corner[2] * config.primes[2]);
  return h & (config.table_size - 1);
}

inline void validate_point(const SpacePoint& p) {
  auto ok = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!ok(p.x) || !ok(p.y) || !ok(p.tau)) throw std::invalid_argument("hashgrid: point outside [0,1]^3");
}

/// Learnable per-level feature tables, stored as one (L, T, F) array.
struct FeatureTable {
  HashGridConfig config;
  Array values;

  explicit FeatureTable(HashGridConfig cfg, double fill = 0.0)
      : config(cfg),
        values((cfg.validate(), tensor::Shape{static_cast<std::size_t>(cfg.levels), cfg.table_size,
                                               static_cast<std::size_t>(cfg.features)}),
               fill) {}

  /// Uniform init in [-scale, scale].
  template <class Rng>
  static FeatureTable random(HashGridConfig cfg, double scale, Rng& rng) {
    FeatureTable t(cfg);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& v : t.values.data()) v = u(rng);
    return t;
  }
};

inline void table_shape_check(const HashGridConfig& config, const Array& values) {
  const tensor::Shape want{static_cast<std::size_t>(config.levels), config.table_size,
                           static_cast<std::size_t>(config.features)};
  if (values.shape() != want) {
    throw std::invalid_argument("hashgrid: table shape " + tensor::shape_string(values.shape()) + " does not match config " +
                                tensor::shape_string(want));
  }
}

/// Per-level corner rows and weights, precomputed once per point.
struct PointLookup {
  std::vector<std::uint64_t> rows;  // levels * 8 flat row offsets (level * T + index)
  std::vector<double> weights;      // levels * 8
};

inline PointLookup lookup(const HashGridConfig& config, const SpacePoint& p) {
  PointLookup out;
  out.rows.resize(static_cast<std::size_t>(config.levels) * 8);
  out.weights.resize(out.rows.size());
  for (int l = 0; l < config.levels; ++l) {
    const Corners c = corner_coords(p, level_resolution(config, l));
    for (int k = 0; k < 8; ++k) {
      out.rows[l * 8 + k] = static_cast<std::uint64_t>(l) * config.table_size + hash_index(c.vertex[k], config);
      out.weights[l * 8 + k] = c.weight[k];
    }
  }
  return out;
}

/// H(p): trilinearly blended features of every level, concatenated coarse to fine (length L*F).
inline void encode(const HashGridConfig& config, const Array& values, const SpacePoint& p, std::span<double> out) {
  validate_point(p);
  if (out.size() != static_cast<std::size_t>(config.width())) throw std::invalid_argument("hashgrid: output width mismatch");
  const PointLookup lk = lookup(config, p);
  const std::size_t F = static_cast<std::size_t>(config.features);
  for (int l = 0; l < config.levels; ++l) {
    for (std::size_t f = 0; f < F; ++f) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += lk.weights[l * 8 + k] * values[lk.rows[l * 8 + k] * F + f];
      out[l * F + f] = acc;
    }
  }
}

inline std::vector<double> encode(const FeatureTable& table, const SpacePoint& p) {
  std::vector<double> out(static_cast<std::size_t>(table.config.width()));
  encode(table.config, table.values, p, out);
  return out;
}

/// Accumulates d(out)/d(table) * upstream into `grad` (same shape as the table). Colliding corners add.
inline void encode_backward(const HashGridConfig& config, const SpacePoint& p, std::span<const double> upstream,
                            Array& grad) {
  validate_point(p);
  if (upstream.size() != static_cast<std::size_t>(config.width())) {
    throw std::invalid_argument("hashgrid: upstream width mismatch");
  }
  const PointLookup lk = lookup(config, p);
  const std::size_t F = static_cast<std::size_t>(config.features);
  for (int l = 0; l < config.levels; ++l) {
    for (int k = 0; k < 8; ++k) {
      const double w = lk.weights[l * 8 + k];
      if (w == 0.0) continue;
      for (std::size_t f = 0; f < F; ++f) grad[lk.rows[l * 8 + k] * F + f] += w * upstream[l * F + f];
    }
  }
}

/// Tape op: encodes a batch of points into an (n x L*F) array, differentiable w.r.t. the table.
inline tensor::Var encode_points(tensor::Var table, const HashGridConfig& config, std::span<const SpacePoint> points) {
  const Array& values = table.value();
  table_shape_check(config, values);
  const std::size_t width = static_cast<std::size_t>(config.width());
  const std::size_t F = static_cast<std::size_t>(config.features);
  auto lookups = std::make_shared<std::vector<PointLookup>>();
  lookups->reserve(points.size());
  Array out = Array::matrix(points.size(), width);
  for (std::size_t i = 0; i < points.size(); ++i) {
    validate_point(points[i]);
    lookups->push_back(lookup(config, points[i]));
    const PointLookup& lk = lookups->back();
    for (int l = 0; l < config.levels; ++l) {
      for (std::size_t f = 0; f < F; ++f) {
        double acc = 0.0;
        for (int k = 0; k < 8; ++k) acc += lk.weights[l * 8 + k] * values[lk.rows[l * 8 + k] * F + f];
        out[i * width + l * F + f] = acc;
      }
    }
  }
  return table.tape->push(std::move(out), "hash_encode", {table.id},
                          [table = table.id, lookups, width, F, levels = config.levels](tensor::Tape& t, std::size_t self) {
                            const Array& g = t.grad(self);
                            Array& gt = t.grad(table);
                            for (std::size_t i = 0; i < lookups->size(); ++i) {
                              const PointLookup& lk = (*lookups)[i];
                              for (int l = 0; l < levels; ++l) {
                                for (int k = 0; k < 8; ++k) {
                                  const double w = lk.weights[l * 8 + k];
                                  if (w == 0.0) continue;
                                  for (std::size_t f = 0; f < F; ++f) {
                                    gt[lk.rows[l * 8 + k] * F + f] += w * g[i * width + l * F + f];
                                  }
                                }
                              }
                            }
                          });
}

}  // namespace fym::hashgrid
