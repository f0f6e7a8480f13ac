#pragma once

// Dense pyramidal Lucas-Kanade flow and the inter-frame flow-variation consistency measure.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fym/image.hpp"

namespace fym::metrics {

/// Per-pixel displacement (x = column shift, y = row shift) from frame a to frame b.
using FlowField = Grid<Point2>;

struct LucasKanadeOptions {
  int levels = 3;
  int window = 5;
  int iterations = 3;
  double min_eigen = 1e-4;  // of the window-averaged structure tensor
};

inline constexpr std::size_t kMinFlowSide = 16;

namespace detail {

// [1 4 6 4 1] / 16 blur, then keep every other pixel. Borders replicate.
inline Image pyr_down(const Image& src) {
  static constexpr std::array<double, 5> k{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const auto h = static_cast<std::ptrdiff_t>(src.height);
  const auto w = static_cast<std::ptrdiff_t>(src.width);
  Image tmp(src.height, src.width);
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int d = -2; d <= 2; ++d) acc += k[d + 2] * src.at(r, std::clamp<std::ptrdiff_t>(c + d, 0, w - 1));
      tmp.at(r, c) = acc;
    }
  }
  Image out((src.height + 1) / 2, (src.width + 1) / 2);
  for (std::size_t r = 0; r < out.height; ++r) {
    for (std::size_t c = 0; c < out.width; ++c) {
      double acc = 0.0;
      for (int d = -2; d <= 2; ++d) {
        acc += k[d + 2] * tmp.at(std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(2 * r) + d, 0, h - 1), 2 * c);
      }
      out.at(r, c) = acc;
    }
  }
  return out;
}

inline double sample_bilinear(const Image& img, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const auto r0 = static_cast<std::size_t>(std::floor(y));
  const auto c0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t r1 = std::min(r0 + 1, img.height - 1);
  const std::size_t c1 = std::min(c0 + 1, img.width - 1);
  const double fy = y - static_cast<double>(r0);
  const double fx = x - static_cast<double>(c0);
  const double top = img.at(r0, c0) * (1.0 - fx) + img.at(r0, c1) * fx;
  const double bottom = img.at(r1, c0) * (1.0 - fx) + img.at(r1, c1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

// Central differences, one-sided at the border.
inline void gradients(const Image& img, Image& gx, Image& gy) {
  gx = Image(img.height, img.width);
  gy = Image(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const std::size_t cl = c == 0 ? 0 : c - 1;
      const std::size_t cr = std::min(c + 1, img.width - 1);
      const std::size_t ru = r == 0 ? 0 : r - 1;
      const std::size_t rd = std::min(r + 1, img.height - 1);
      gx.at(r, c) = (img.at(r, cr) - img.at(r, cl)) / static_cast<double>(cr - cl);
      gy.at(r, c) = (img.at(rd, c) - img.at(ru, c)) / static_cast<double>(rd - ru);
    }
  }
}

// Replaces every pixel with valid == 0 by its nearest valid pixel (4-connected distance,
// ties broken by scan order). No valid pixel leaves the field untouched.
inline void fill_from_nearest(FlowField& flow, const Grid<std::uint8_t>& valid) {
  std::vector<std::size_t> source(flow.size(), flow.size());
  std::vector<std::size_t> queue;
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (valid.pixels[i]) {
      source[i] = i;
      queue.push_back(i);
    }
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t i = queue[head];
    const std::size_t r = i / flow.width, c = i % flow.width;
    const std::size_t nb[4] = {r > 0 ? i - flow.width : i, r + 1 < flow.height ? i + flow.width : i,
                               c > 0 ? i - 1 : i, c + 1 < flow.width ? i + 1 : i};
    for (std::size_t j : nb) {
      if (source[j] == flow.size()) {
        source[j] = source[i];
        queue.push_back(j);
      }
    }
  }
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (!valid.pixels[i] && source[i] < flow.size()) flow.pixels[i] = flow.pixels[source[i]];
  }
}

// One level of iterative LK refinement. Estimates are kept only where the window fits in frame a,
// the structure tensor is well conditioned, and the warped window stays inside frame b; every
// other pixel takes the nearest kept estimate.
inline void refine_level(const Image& a, const Image& b, FlowField& flow, const LucasKanadeOptions& opt) {
  Image gx, gy;
  gradients(a, gx, gy);
  const int half = opt.window / 2;
  const auto h = static_cast<int>(a.height);
  const auto w = static_cast<int>(a.width);
  const double n = static_cast<double>(opt.window * opt.window);
  Grid<std::uint8_t> valid(a.height, a.width, 0);
  for (int r = half; r + half < h; ++r) {
    for (int c = half; c + half < w; ++c) {
      double gxx = 0.0, gxy = 0.0, gyy = 0.0;
      for (int dr = -half; dr <= half; ++dr) {
        for (int dc = -half; dc <= half; ++dc) {
          const double ix = gx.at(r + dr, c + dc), iy = gy.at(r + dr, c + dc);
          gxx += ix * ix;
          gxy += ix * iy;
          gyy += iy * iy;
        }
      }
      const double det = gxx * gyy - gxy * gxy;
      const double trace = gxx + gyy;
      const double min_eig = 0.5 * (trace - std::sqrt(std::max(0.0, trace * trace - 4.0 * det)));
      if (min_eig / n < opt.min_eigen) continue;
      Point2 d = flow.at(r, c);
      for (int it = 0; it < opt.iterations; ++it) {
        double bx = 0.0, by = 0.0;
        for (int dr = -half; dr <= half; ++dr) {
          for (int dc = -half; dc <= half; ++dc) {
            const double diff = a.at(r + dr, c + dc) - sample_bilinear(b, r + dr + d.y, c + dc + d.x);
            bx += diff * gx.at(r + dr, c + dc);
            by += diff * gy.at(r + dr, c + dc);
          }
        }
        const double ux = (gyy * bx - gxy * by) / det;
        const double uy = (gxx * by - gxy * bx) / det;
        d.x += ux;
        d.y += uy;
        if (ux * ux + uy * uy < 1e-12) break;
      }
      const bool inside = r - half + d.y >= 0.0 && r + half + d.y <= h - 1.0 && c - half + d.x >= 0.0 &&
                          c + half + d.x <= w - 1.0;
      if (!inside || !std::isfinite(d.x) || !std::isfinite(d.y)) continue;
      flow.at(r, c) = d;
      valid.at(r, c) = 1;
    }
  }
  fill_from_nearest(flow, valid);
}

}  // namespace detail

inline FlowField optical_flow(const Image& a, const Image& b, const LucasKanadeOptions& opt = {}) {
  require_same_dims(a, b, "optical_flow");
  if (a.height < kMinFlowSide || a.width < kMinFlowSide) {
    throw std::invalid_argument("optical_flow: frames of " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                " are below the " + std::to_string(kMinFlowSide) + "x" + std::to_string(kMinFlowSide) +
                                " pyramid minimum");
  }
  if (opt.levels < 1 || opt.window < 3 || opt.window % 2 == 0 || opt.iterations < 1) {
    throw std::invalid_argument("optical_flow: invalid Lucas-Kanade options");
  }
  std::vector<Image> pa{a}, pb{b};
  for (int l = 1; l < opt.levels; ++l) {
    pa.push_back(detail::pyr_down(pa.back()));
    pb.push_back(detail::pyr_down(pb.back()));
  }
  FlowField flow(pa.back().height, pa.back().width);
  for (int l = opt.levels - 1; l >= 0; --l) {
    const Image& la = pa[static_cast<std::size_t>(l)];
    if (!flow.same_dims(la)) {
      FlowField up(la.height, la.width);
      for (std::size_t r = 0; r < up.height; ++r) {
        for (std::size_t c = 0; c < up.width; ++c) {
          const Point2 coarse = flow.at(std::min(r / 2, flow.height - 1), std::min(c / 2, flow.width - 1));
          up.at(r, c) = {2.0 * coarse.x, 2.0 * coarse.y};
        }
      }
      flow = std::move(up);
    }
    detail::refine_level(la, pb[static_cast<std::size_t>(l)], flow, opt);
  }
  return flow;
}

inline double mean_magnitude(const FlowField& flow) {
  if (flow.size() == 0) return 0.0;
  double s = 0.0;
  for (const Point2& d : flow.pixels) s += std::hypot(d.x, d.y);
  return s / static_cast<double>(flow.size());
}

inline Point2 mean_flow(const FlowField& flow) {
  Point2 m;
  for (const Point2& d : flow.pixels) {
    m.x += d.x;
    m.y += d.y;
  }
  const double n = static_cast<double>(std::max<std::size_t>(flow.size(), 1));
  return {m.x / n, m.y / n};
}

/// m_i = full-frame mean flow magnitude between frames i and i+1.
inline std::vector<double> flow_series(std::span<const Image> frames, const LucasKanadeOptions& opt = {}) {
  if (frames.size() < 2) throw std::invalid_argument("flow_series: need at least 2 frames");
  std::vector<double> m;
  m.reserve(frames.size() - 1);
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) m.push_back(mean_magnitude(optical_flow(frames[i], frames[i + 1], opt)));
  return m;
}

/// Sum over pairs of |m_edit - m_reference|.
inline double consistency_total_error(std::span<const double> edited, std::span<const double> reference) {
  if (edited.size() != reference.size()) {
    throw std::invalid_argument("consistency: series lengths differ (" + std::to_string(edited.size()) + " vs " +
                                std::to_string(reference.size()) + ")");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < edited.size(); ++i) total += std::abs(edited[i] - reference[i]);
  return total;
}

}  // namespace fym::metrics
