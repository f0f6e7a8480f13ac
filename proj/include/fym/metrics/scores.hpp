#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fym/dram.hpp"
#include "fym/image.hpp"

namespace fym::metrics {

inline constexpr double kPsnrIdentical = 99.0;

/// Mean Euclidean landmark distance over frames and points.
inline double expression_error(std::span<const dram::LandmarkSet> reference, std::span<const dram::LandmarkSet> predicted) {
  if (reference.size() != predicted.size()) {
    throw std::invalid_argument("expression_error: " + std::to_string(reference.size()) + " reference frames vs " +
                                std::to_string(predicted.size()) + " predicted");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < reference.size(); ++f) {
    if (reference[f].size() != predicted[f].size()) {
      throw std::invalid_argument("expression_error: point count mismatch in frame " + std::to_string(f + 1));
    }
    for (std::size_t m = 0; m < reference[f].size(); ++m) {
      sum += std::hypot(reference[f][m].x - predicted[f][m].x, reference[f][m].y - predicted[f][m].y);
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

inline double mse(const Image& a, const Image& b) {
  require_same_dims(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    s += d * d;
  }
  return a.size() == 0 ? 0.0 : s / static_cast<double>(a.size());
}

/// 10 log10(1 / MSE), with identical frames reported as 99 dB.
inline double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  return m == 0.0 ? kPsnrIdentical : 10.0 * std::log10(1.0 / m);
}

}  // namespace fym::metrics
