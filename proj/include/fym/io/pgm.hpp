#pragma once

// Binary portable graymap (P5) reader/writer. 16-bit samples are big-endian per the format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fym/image.hpp"

namespace fym::io {

namespace fs = std::filesystem;

struct IoError : std::runtime_error {
  IoError(const fs::path& path, const std::string& reason) : std::runtime_error(path.string() + ": " + reason) {}
};

struct RawGraymap {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 0;
  std::vector<std::uint16_t> samples;
};

namespace detail {

inline void skip_space_and_comments(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

inline std::size_t read_header_number(std::istream& in, const fs::path& path, const char* what) {
  skip_space_and_comments(in);
  long long v = -1;
  if (!(in >> v) || v <= 0) throw IoError(path, std::string("corrupt header (") + what + ")");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

inline RawGraymap read_pgm_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open file");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw IoError(path, "corrupt header (expected P5 graymap)");
  RawGraymap g;
  g.width = detail::read_header_number(in, path, "width");
  g.height = detail::read_header_number(in, path, "height");
  const std::size_t maxval = detail::read_header_number(in, path, "maxval");
  if (maxval > 65535) throw IoError(path, "corrupt header (maxval " + std::to_string(maxval) + ")");
  g.maxval = static_cast<unsigned>(maxval);
  in.get();  // single whitespace before the raster
  const std::size_t n = g.width * g.height;
  const std::size_t bytes = g.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(n * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IoError(path, "truncated raster");
  g.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.samples[i] = bytes == 2 ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]) : raw[i];
    if (g.samples[i] > g.maxval) throw IoError(path, "sample exceeds maxval");
  }
  return g;
}

inline void write_pgm_raw(const fs::path& path, const RawGraymap& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << "P5\n" << g.width << ' ' << g.height << '\n' << g.maxval << '\n';
  const bool wide = g.maxval > 255;
  std::vector<unsigned char> raw;
  raw.reserve(g.samples.size() * (wide ? 2 : 1));
  for (std::uint16_t s : g.samples) {
    if (wide) raw.push_back(static_cast<unsigned char>(s >> 8));
    raw.push_back(static_cast<unsigned char>(s & 0xFF));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError(path, "write failed");
}

/// 16-bit frame; values are clamped to [0,1] and quantized to 1/65535.
inline void write_frame(const fs::path& path, const Image& img) {
  RawGraymap g{img.width, img.height, 65535, {}};
  g.samples.reserve(img.size());
  for (double v : img.pixels) g.samples.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0)));
  write_pgm_raw(path, g);
}

inline Image read_frame(const fs::path& path) {
  const RawGraymap g = read_pgm_raw(path);
  Image img(g.height, g.width);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<double>(g.samples[i]) / g.maxval;
  return img;
}

/// Masks are stored as 8-bit graymaps with 0 / 255.
inline void write_mask(const fs::path& path, const Mask& mask) {
  RawGraymap g{mask.width, mask.height, 255, {}};
  g.samples.reserve(mask.size());
  for (std::uint8_t v : mask.pixels) g.samples.push_back(v ? 255 : 0);
  write_pgm_raw(path, g);
}

inline Mask read_mask(const fs::path& path) {
  const RawGraymap g = read_pgm_raw(path);
  Mask m(g.height, g.width);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (g.samples[i] != 0 && g.samples[i] != g.maxval) throw IoError(path, "mask sample is neither 0 nor maxval");
    m.pixels[i] = g.samples[i] ? 1 : 0;
  }
  return m;
}

}  // namespace fym::io
