#pragma once

// Synthetic "talking shape" clips with analytic motion, masks and landmarks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fym/dram.hpp"
#include "fym/image.hpp"

namespace fym::synth {

using dram::LandmarkSet;

enum class MotionKind { translate, orbit, oscillate };

inline std::string to_string(MotionKind k) {
  switch (k) {
    case MotionKind::translate: return "translate";
    case MotionKind::orbit: return "orbit";
    case MotionKind::oscillate: return "oscillate";
  }
  return "?";
}

inline MotionKind parse_motion_kind(const std::string& s) {
  if (s == "translate") return MotionKind::translate;
  if (s == "orbit") return MotionKind::orbit;
  if (s == "oscillate") return MotionKind::oscillate;
  throw std::invalid_argument("synth: unknown motion kind '" + s + "'");
}

/// translate: params = (vx, vy) px/frame, reflecting off the frame walls.
/// orbit:     params = (radius px, angular rate rad/frame) around the frame center.
/// oscillate: params = (amplitude x, amplitude y, period frames) around the frame center.
struct MotionSpec {
  MotionKind kind = MotionKind::translate;
  std::vector<double> params{2.0, 0.0};
  std::uint64_t seed = 0;

  friend bool operator==(const MotionSpec&, const MotionSpec&) = default;
};

inline constexpr double kMaxStep = 4.0;
inline constexpr double kBackground = 0.05;
inline constexpr double kBody = 0.75;
inline constexpr double kShading = 0.15;
inline constexpr double kFeature = 0.2;
inline constexpr std::size_t kLandmarkCount = 7;

/// Shape layout, all lengths relative to the body radius.
struct ShapeGeometry {
  double radius = 0.0;
  double shading_angle = 0.0;

  static ShapeGeometry for_frame(std::size_t height, std::size_t width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    return {0.22 * static_cast<double>(std::min(height, width)), angle(rng)};
  }

  double margin() const { return radius + 1.5; }
  Point2 eye_left(Point2 c) const { return {c.x - 0.38 * radius, c.y - 0.3 * radius}; }
  Point2 eye_right(Point2 c) const { return {c.x + 0.38 * radius, c.y - 0.3 * radius}; }
  double eye_radius() const { return 0.16 * radius; }
  Point2 mouth_center(Point2 c) const { return {c.x, c.y + 0.42 * radius}; }
  double mouth_half_length() const { return 0.4 * radius; }
  double mouth_half_thickness() const { return 0.12 * radius; }
  Point2 forehead(Point2 c) const { return {c.x, c.y - 0.62 * radius}; }

  /// Body centroid, left eye, right eye, mouth left, mouth center, mouth right, forehead.
  LandmarkSet landmarks(Point2 c) const {
    const Point2 m = mouth_center(c);
    const double a = mouth_half_length();
    return {c, eye_left(c), eye_right(c), {m.x - a, m.y}, m, {m.x + a, m.y}, forehead(c)};
  }
};

namespace detail {

inline double reflect(double unfolded, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  double u = std::fmod(unfolded - lo, 2.0 * span);
  if (u < 0.0) u += 2.0 * span;
  return u <= span ? lo + u : lo + 2.0 * span - u;
}

// 1-pixel linear anti-aliasing ramp on a signed distance (negative inside).
inline double coverage(double signed_distance) { return std::clamp(0.5 - signed_distance, 0.0, 1.0); }

}  // namespace detail

/// Center of the shape in frame i (1-based). Closed form for every motion kind.
inline Point2 shape_center(const MotionSpec& spec, std::size_t height, std::size_t width, int frame) {
  const ShapeGeometry g = ShapeGeometry::for_frame(height, width, spec.seed);
  const double lo_x = g.margin();
  const double hi_x = static_cast<double>(width) - 1.0 - g.margin();
  const double lo_y = g.margin();
  const double hi_y = static_cast<double>(height) - 1.0 - g.margin();
  const Point2 mid{(width - 1) / 2.0, (height - 1) / 2.0};
  const double k = frame - 1;
  switch (spec.kind) {
    case MotionKind::translate: {
      const double vx = spec.params.at(0);
      const double vy = spec.params.at(1);
      const double sx = vx > 0 ? lo_x : vx < 0 ? hi_x : mid.x;
      const double sy = vy > 0 ? lo_y : vy < 0 ? hi_y : mid.y;
      return {detail::reflect(sx + vx * k, lo_x, hi_x), detail::reflect(sy + vy * k, lo_y, hi_y)};
    }
    case MotionKind::orbit: {
      const double r = spec.params.at(0);
      const double w = spec.params.at(1);
      return {mid.x + r * std::cos(w * k), mid.y + r * std::sin(w * k)};
    }
    case MotionKind::oscillate: {
      const double phase = 2.0 * std::numbers::pi * k / spec.params.at(2);
      return {mid.x + spec.params.at(0) * std::sin(phase), mid.y + spec.params.at(1) * std::sin(phase)};
    }
  }
  return mid;
}

/// Exact displacement of the shape center from frame i to frame j.
inline Point2 oracle_displacement(const MotionSpec& spec, std::size_t height, std::size_t width, int i, int j) {
  const Point2 a = shape_center(spec, height, width, i);
  const Point2 b = shape_center(spec, height, width, j);
  return {b.x - a.x, b.y - a.y};
}

enum class Role { rendered, edited };

inline std::string to_string(Role r) { return r == Role::rendered ? "rendered" : "edited"; }
inline Role parse_role(const std::string& s) {
  if (s == "rendered") return Role::rendered;
  if (s == "edited") return Role::edited;
  throw std::invalid_argument("synth: unknown role '" + s + "'");
}

/// One clip: frames, masks and landmarks share frame count and dimensions.
struct VideoBundle {
  std::vector<Image> frames;
  std::vector<Mask> masks;
  std::vector<LandmarkSet> landmarks;
  std::optional<MotionSpec> motion;
  Role role = Role::rendered;

  std::size_t frame_count() const noexcept { return frames.size(); }
  std::size_t height() const noexcept { return frames.empty() ? 0 : frames.front().height; }
  std::size_t width() const noexcept { return frames.empty() ? 0 : frames.front().width; }

  void validate() const {
    const std::size_t k = frames.size();
    if (k < 2) throw std::invalid_argument("bundle: need at least 2 frames, got " + std::to_string(k));
    if (masks.size() != k) throw std::invalid_argument("bundle: mask count does not match frame count");
    if (landmarks.size() != k) throw std::invalid_argument("bundle: landmark record count does not match frame count");
    for (std::size_t i = 0; i < k; ++i) {
      if (!frames[i].same_dims(height(), width()) || !masks[i].same_dims(height(), width())) {
        throw std::invalid_argument("bundle: frame " + std::to_string(i + 1) + " has mismatched dimensions");
      }
      if (landmarks[i].size() != landmarks[0].size()) {
        throw std::invalid_argument("bundle: landmark count changes at frame " + std::to_string(i + 1));
      }
    }
  }

  friend bool operator==(const VideoBundle&, const VideoBundle&) = default;
};

/// Renders one frame of the shape centered at `c`. Optionally returns the body coverage.
inline Image render_frame(std::size_t height, std::size_t width, const ShapeGeometry& g, Point2 c,
                          Grid<double>* body_coverage = nullptr) {
  Image img(height, width, kBackground);
  if (body_coverage) *body_coverage = Grid<double>(height, width, 0.0);
  const Point2 el = g.eye_left(c);
  const Point2 er = g.eye_right(c);
  const Point2 mc = g.mouth_center(c);
  const double ca = std::cos(g.shading_angle);
  const double sa = std::sin(g.shading_angle);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t col = 0; col < width; ++col) {
      const double x = static_cast<double>(col);
      const double y = static_cast<double>(r);
      const double dx = x - c.x;
      const double dy = y - c.y;
      const double body = detail::coverage(std::hypot(dx, dy) - g.radius);
      const double shade = kBody + kShading * std::clamp((dx * ca + dy * sa) / g.radius, -1.0, 1.0);
      double v = kBackground + body * (shade - kBackground);
      const double eye = std::max(detail::coverage(std::hypot(x - el.x, y - el.y) - g.eye_radius()),
                                  detail::coverage(std::hypot(x - er.x, y - er.y) - g.eye_radius()));
      // Mouth: signed distance to an axis-aligned bar.
      const double qx = std::abs(x - mc.x) - g.mouth_half_length();
      const double qy = std::abs(y - mc.y) - g.mouth_half_thickness();
      const double bar_sd = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0)) + std::min(std::max(qx, qy), 0.0);
      const double feature = std::max(eye, detail::coverage(bar_sd)) * body;
      v += feature * (kFeature - v);
      img.at(r, col) = v;
      if (body_coverage) body_coverage->at(r, col) = body;
    }
  }
  return img;
}

namespace detail {

inline std::vector<Point2> centers(const MotionSpec& spec, int frames, std::size_t height, std::size_t width) {
  std::vector<Point2> out;
  for (int i = 1; i <= frames; ++i) out.push_back(shape_center(spec, height, width, i));
  return out;
}

inline void validate_motion(const MotionSpec& spec, int frames, std::size_t height, std::size_t width) {
  const std::size_t need = spec.kind == MotionKind::oscillate ? 3 : 2;
  if (spec.params.size() != need) {
    throw std::invalid_argument("synth: motion '" + to_string(spec.kind) + "' takes " + std::to_string(need) +
                                " parameters, got " + std::to_string(spec.params.size()));
  }
  for (double p : spec.params) {
    if (!std::isfinite(p)) throw std::invalid_argument("synth: non-finite motion parameter");
  }
  if (spec.kind == MotionKind::oscillate && !(spec.params[2] > 0.0)) {
    throw std::invalid_argument("synth: oscillation period must be positive");
  }
  const ShapeGeometry g = ShapeGeometry::for_frame(height, width, spec.seed);
  const auto cs = centers(spec, frames, height, width);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const Point2 c = cs[i];
    if (c.x < g.margin() - 1e-9 || c.y < g.margin() - 1e-9 || c.x > width - 1.0 - g.margin() + 1e-9 ||
        c.y > height - 1.0 - g.margin() + 1e-9) {
      throw std::invalid_argument("synth: shape leaves the frame at frame " + std::to_string(i + 1));
    }
    if (i > 0 && std::hypot(c.x - cs[i - 1].x, c.y - cs[i - 1].y) > kMaxStep + 1e-9) {
      throw std::invalid_argument("synth: per-frame displacement exceeds " + std::to_string(kMaxStep) + " px at frame " +
                                  std::to_string(i + 1));
    }
  }
}

inline Mask mask_from_coverage(const Grid<double>& coverage) {
  Mask m(coverage.height, coverage.width, 0);
  for (std::size_t i = 0; i < coverage.size(); ++i) m.pixels[i] = coverage.pixels[i] >= 0.5 ? 1 : 0;
  return m;
}

}  // namespace detail

/// Renders a clip of `frames` frames at height x width.
inline VideoBundle generate(const MotionSpec& spec, int frames, std::size_t height, std::size_t width) {
  if (height < 32 || width < 32) throw std::invalid_argument("synth: frames must be at least 32x32");
  if (frames < 2) throw std::invalid_argument("synth: need at least 2 frames");
  detail::validate_motion(spec, frames, height, width);
  const ShapeGeometry g = ShapeGeometry::for_frame(height, width, spec.seed);
  VideoBundle b;
  b.motion = spec;
  b.role = Role::rendered;
  for (const Point2 c : detail::centers(spec, frames, height, width)) {
    Grid<double> cov;
    b.frames.push_back(render_frame(height, width, g, c, &cov));
    b.masks.push_back(detail::mask_from_coverage(cov));
    b.landmarks.push_back(g.landmarks(c));
  }
  return b;
}

/// Re-renders frames 2..K with the shape displaced by a random offset of length <= amplitude,
/// keeping the source masks and landmarks. Models an edit that breaks temporal consistency.
inline VideoBundle perturb_motion(const VideoBundle& source, double amplitude, std::uint64_t seed) {
  if (!source.motion) throw std::invalid_argument("synth: motion perturbation needs a synthetic bundle");
  if (!(amplitude >= 0.0)) throw std::invalid_argument("synth: perturbation amplitude must be >= 0");
  const MotionSpec& spec = *source.motion;
  const ShapeGeometry g = ShapeGeometry::for_frame(source.height(), source.width(), spec.seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VideoBundle out = source;
  for (std::size_t i = 1; i < out.frames.size(); ++i) {
    const double r = amplitude * std::sqrt(u(rng));
    const double a = 2.0 * std::numbers::pi * u(rng);
    Point2 c = shape_center(spec, source.height(), source.width(), static_cast<int>(i + 1));
    c.x = std::clamp(c.x + r * std::cos(a), g.margin(), source.width() - 1.0 - g.margin());
    c.y = std::clamp(c.y + r * std::sin(a), g.margin(), source.height() - 1.0 - g.margin());
    out.frames[i] = render_frame(source.height(), source.width(), g, c);
  }
  return out;
}

enum class EditKind { recolor, accessory };

struct Edit {
  EditKind kind = EditKind::recolor;
  double gamma = 2.0;
};

inline Edit parse_edit(const std::string& s, double gamma = 2.0) {
  if (s == "recolor") return {EditKind::recolor, gamma};
  if (s == "accessory" || s == "add-accessory") return {EditKind::accessory, gamma};
  throw std::invalid_argument("synth: unknown edit kind '" + s + "'");
}

/// Appearance-only edit. Motion, masks and landmarks are carried over unchanged.
inline VideoBundle apply_edit(const VideoBundle& source, const Edit& edit) {
  if (source.role != Role::rendered) throw std::invalid_argument("synth: edits apply to rendered bundles only");
  if (edit.kind == EditKind::recolor && !(edit.gamma > 0.0 && std::isfinite(edit.gamma))) {
    throw std::invalid_argument("synth: recolor gamma must be positive");
  }
  VideoBundle out = source;
  out.role = Role::edited;
  for (std::size_t i = 0; i < out.frames.size(); ++i) {
    Image& f = out.frames[i];
    if (edit.kind == EditKind::recolor) {
      for (auto& v : f.pixels) v = std::pow(v, edit.gamma);
    } else {
      // Bright disk rigidly attached to the body's upper right, located through the center landmark.
      const Point2 c = out.landmarks[i].at(0);
      const double radius = 0.22 * static_cast<double>(std::min(f.height, f.width));
      const Point2 a{c.x + 0.62 * radius, c.y - 0.62 * radius};
      const double ar = 0.3 * radius;
      for (std::size_t r = 0; r < f.height; ++r) {
        for (std::size_t col = 0; col < f.width; ++col) {
          const double cov = detail::coverage(std::hypot(col - a.x, r - a.y) - ar);
          f.at(r, col) += cov * (1.0 - f.at(r, col));
        }
      }
    }
  }
  return out;
}

/// Smooth sinusoidal texture covering the whole frame, translated by `velocity` px per frame.
/// Ground truth for flow tests: every pixel moves exactly by `velocity`.
inline std::vector<Image> textured_translation(std::size_t height, std::size_t width, int frames, Point2 velocity,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 4; ++k) {
    const double wavelength = 16.0 + 12.0 * u(rng);
    const double dir = 2.0 * std::numbers::pi * u(rng);
    const double freq = 2.0 * std::numbers::pi / wavelength;
    waves.push_back({freq * std::cos(dir), freq * std::sin(dir), 2.0 * std::numbers::pi * u(rng), 0.1});
  }
  std::vector<Image> out;
  for (int i = 0; i < frames; ++i) {
    Image img(height, width);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        const double x = c - velocity.x * i;
        const double y = r - velocity.y * i;
        double v = 0.5;
        for (const Wave& w : waves) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
        img.at(r, c) = v;
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

/// Recovers the 7 landmarks from a rendered (or generated) frame: body centroid from the
/// hole-filled silhouette, eyes and mouth from darkness-weighted centroids inside the body.
inline LandmarkSet extract_landmarks(const Image& img) {
  const std::size_t h = img.height;
  const std::size_t w = img.width;
  if (h < 3 || w < 3) throw std::invalid_argument("synth: frame too small for landmark extraction");
  double border = 0.0;
  std::size_t border_n = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (r == 0 || c == 0 || r == h - 1 || c == w - 1) {
        border += img.at(r, c);
        ++border_n;
      }
    }
  }
  const double bg = border / static_cast<double>(border_n);
  std::vector<double> sorted = img.pixels;
  std::sort(sorted.begin(), sorted.end());
  const double hi = sorted[static_cast<std::size_t>(0.97 * (sorted.size() - 1))];
  const double support_thr = bg + 0.3 * (hi - bg);

  // Silhouette with holes filled: everything not reachable from the border through background.
  Grid<std::uint8_t> outside(h, w, 0);
  std::vector<std::pair<std::size_t, std::size_t>> stack;
  auto push = [&](std::size_t r, std::size_t c) {
    if (!outside.at(r, c) && img.at(r, c) < support_thr) {
      outside.at(r, c) = 1;
      stack.emplace_back(r, c);
    }
  };
  for (std::size_t r = 0; r < h; ++r) {
    push(r, 0);
    push(r, w - 1);
  }
  for (std::size_t c = 0; c < w; ++c) {
    push(0, c);
    push(h - 1, c);
  }
  while (!stack.empty()) {
    auto [r, c] = stack.back();
    stack.pop_back();
    if (r > 0) push(r - 1, c);
    if (r + 1 < h) push(r + 1, c);
    if (c > 0) push(r, c - 1);
    if (c + 1 < w) push(r, c + 1);
  }
  double sx = 0.0, sy = 0.0, area = 0.0;
  std::vector<double> inside_values;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (outside.at(r, c)) continue;
      sx += c;
      sy += r;
      area += 1.0;
      inside_values.push_back(img.at(r, c));
    }
  }
  if (area < 4.0) {
    const Point2 mid{(w - 1) / 2.0, (h - 1) / 2.0};
    ShapeGeometry g{0.22 * static_cast<double>(std::min(h, w)), 0.0};
    return g.landmarks(mid);
  }
  const Point2 center{sx / area, sy / area};
  const double radius = std::sqrt(area / std::numbers::pi);
  std::nth_element(inside_values.begin(), inside_values.begin() + inside_values.size() / 2, inside_values.end());
  const double body = inside_values[inside_values.size() / 2];
  const double dark_thr = bg + 0.55 * (body - bg);

  struct Acc {
    double w = 0, x = 0, y = 0, xx = 0;
    void add(double wt, double px, double py) {
      w += wt;
      x += wt * px;
      y += wt * py;
      xx += wt * px * px;
    }
  } eye_l, eye_r, mouth;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (outside.at(r, c)) continue;
      const double dx = c - center.x;
      const double dy = r - center.y;
      if (std::hypot(dx, dy) > 0.85 * radius) continue;
      const double dark = dark_thr - img.at(r, c);
      if (dark <= 0.0) continue;
      if (dy < -0.05 * radius) {
        (dx < 0 ? eye_l : eye_r).add(dark, c, r);
      } else if (dy > 0.15 * radius) {
        mouth.add(dark, c, r);
      }
    }
  }
  const ShapeGeometry g{radius, 0.0};
  LandmarkSet out = g.landmarks(center);
  if (eye_l.w > 0) out[1] = {eye_l.x / eye_l.w, eye_l.y / eye_l.w};
  if (eye_r.w > 0) out[2] = {eye_r.x / eye_r.w, eye_r.y / eye_r.w};
  if (mouth.w > 0) {
    const double mx = mouth.x / mouth.w;
    const double my = mouth.y / mouth.w;
    const double var = std::max(mouth.xx / mouth.w - mx * mx, 0.0);
    const double half = std::sqrt(3.0 * var);
    out[3] = {mx - half, my};
    out[4] = {mx, my};
    out[5] = {mx + half, my};
  }
  return out;
}

}  // namespace fym::synth
