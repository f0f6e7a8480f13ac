#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fym {

/// Row-major H x W grid.
template <class T>
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> pixels;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, T fill = T{}) : height(h), width(w), pixels(h * w, fill) {}

  std::size_t size() const noexcept { return pixels.size(); }
  T& at(std::size_t row, std::size_t col) noexcept { return pixels[row * width + col]; }
  const T& at(std::size_t row, std::size_t col) const noexcept { return pixels[row * width + col]; }
  bool same_dims(std::size_t h, std::size_t w) const noexcept { return height == h && width == w; }
  template <class U>
  bool same_dims(const Grid<U>& other) const noexcept {
    return height == other.height && width == other.width;
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Grayscale frame with values nominally in [0, 1].
using Image = Grid<double>;
/// Foreground mask: 1 = foreground, 0 = background.
using Mask = Grid<std::uint8_t>;

inline void require_same_dims(const Image& a, const Image& b, const char* what) {
  if (!a.same_dims(b)) {
    throw std::invalid_argument(std::string(what) + ": frame dimensions differ (" + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width) + ")");
  }
}

inline Image clamp01(Image img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

/// 2D point in pixel coordinates (x = column, y = row).
struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

}  // namespace fym
