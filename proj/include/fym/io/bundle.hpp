#pragma once

// Video bundle directory: manifest.json, frames/*.pgm, masks/*.pgm, landmarks.txt and, for
// synthetic clips, oracle.csv with the exact per-pair displacement.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fym/io/pgm.hpp"
#include "fym/synth.hpp"

namespace fym::io {

inline constexpr int kManifestVersion = 1;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One line per frame: the 1-based frame index followed by x y pairs.
inline void write_landmarks(const fs::path& path, const std::vector<dram::LandmarkSet>& landmarks) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot open for writing");
  out << "# frame x1 y1 x2 y2 ...\n";
  for (std::size_t f = 0; f < landmarks.size(); ++f) {
    out << f + 1;
    for (const Point2& p : landmarks[f]) out << ' ' << format_double(p.x) << ' ' << format_double(p.y);
    out << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

inline std::vector<dram::LandmarkSet> read_landmarks(const fs::path& path, std::size_t expected_frames) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open file");
  std::vector<dram::LandmarkSet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::size_t frame = 0;
    if (!(ss >> frame) || frame != out.size() + 1) {
      throw IoError(path, "line " + std::to_string(line_no) + ": expected frame index " + std::to_string(out.size() + 1));
    }
    dram::LandmarkSet set;
    double x = 0.0, y = 0.0;
    while (ss >> x) {
      if (!(ss >> y)) throw IoError(path, "line " + std::to_string(line_no) + ": odd number of coordinates");
      set.push_back({x, y});
    }
    if (!ss.eof()) throw IoError(path, "line " + std::to_string(line_no) + ": unparsable coordinate");
    if (!out.empty() && set.size() != out.front().size()) {
      throw IoError(path, "line " + std::to_string(line_no) + ": point count differs from frame 1");
    }
    out.push_back(std::move(set));
  }
  if (out.size() != expected_frames) {
    throw IoError(path, "has " + std::to_string(out.size()) + " frames, manifest declares " +
                            std::to_string(expected_frames));
  }
  return out;
}

inline std::string frame_name(const char* dir, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s/%04zu.pgm", dir, i + 1);
  return buf;
}

inline void write_bundle(const fs::path& dir, const synth::VideoBundle& bundle) {
  bundle.validate();
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");
  nlohmann::ordered_json m;
  m["version"] = kManifestVersion;
  m["height"] = bundle.height();
  m["width"] = bundle.width();
  m["frame_count"] = bundle.frame_count();
  m["role"] = synth::to_string(bundle.role);
  m["frames"] = nlohmann::json::array();
  m["masks"] = nlohmann::json::array();
  for (std::size_t i = 0; i < bundle.frame_count(); ++i) {
    const std::string f = frame_name("frames", i);
    const std::string k = frame_name("masks", i);
    write_frame(dir / f, bundle.frames[i]);
    write_mask(dir / k, bundle.masks[i]);
    m["frames"].push_back(f);
    m["masks"].push_back(k);
  }
  m["landmarks"] = "landmarks.txt";
  write_landmarks(dir / "landmarks.txt", bundle.landmarks);
  if (bundle.motion) {
    m["motion"] = {{"kind", synth::to_string(bundle.motion->kind)},
                   {"params", bundle.motion->params},
                   {"seed", bundle.motion->seed}};
    std::ofstream oracle(dir / "oracle.csv");
    oracle << "pair,dx,dy\n";
    for (std::size_t i = 1; i < bundle.frame_count(); ++i) {
      const Point2 d = synth::oracle_displacement(*bundle.motion, bundle.height(), bundle.width(), static_cast<int>(i),
                                                  static_cast<int>(i + 1));
      oracle << i << ',' << format_double(d.x) << ',' << format_double(d.y) << '\n';
    }
    if (!oracle) throw IoError(dir / "oracle.csv", "write failed");
  }
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << '\n';
  if (!out) throw IoError(dir / "manifest.json", "write failed");
}

inline synth::VideoBundle read_bundle(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError(manifest_path, "cannot open manifest");
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path, std::string("malformed manifest: ") + e.what());
  }
  synth::VideoBundle b;
  std::size_t height = 0, width = 0, count = 0;
  try {
    if (!m.contains("version")) throw IoError(manifest_path, "missing version field");
    if (m.at("version").get<int>() != kManifestVersion) {
      throw IoError(manifest_path, "unsupported manifest version " + m.at("version").dump());
    }
    height = m.at("height").get<std::size_t>();
    width = m.at("width").get<std::size_t>();
    count = m.at("frame_count").get<std::size_t>();
    b.role = synth::parse_role(m.at("role").get<std::string>());
    const auto frames = m.at("frames").get<std::vector<std::string>>();
    const auto masks = m.at("masks").get<std::vector<std::string>>();
    if (frames.size() != count || masks.size() != count) {
      throw IoError(manifest_path, "frame_count " + std::to_string(count) + " but " + std::to_string(frames.size()) +
                                       " frames and " + std::to_string(masks.size()) + " masks listed");
    }
    for (std::size_t i = 0; i < count; ++i) {
      if (!fs::exists(dir / frames[i])) throw IoError(dir / frames[i], "frame " + std::to_string(i + 1) + " is missing");
      if (!fs::exists(dir / masks[i])) throw IoError(dir / masks[i], "mask " + std::to_string(i + 1) + " is missing");
      b.frames.push_back(read_frame(dir / frames[i]));
      b.masks.push_back(read_mask(dir / masks[i]));
      if (!b.frames.back().same_dims(height, width) || !b.masks.back().same_dims(height, width)) {
        throw IoError(dir / frames[i], "dimensions differ from the manifest");
      }
    }
    b.landmarks = read_landmarks(dir / m.at("landmarks").get<std::string>(), count);
    if (m.contains("motion")) {
      const auto& mo = m.at("motion");
      b.motion = synth::MotionSpec{synth::parse_motion_kind(mo.at("kind").get<std::string>()),
                                   mo.at("params").get<std::vector<double>>(), mo.at("seed").get<std::uint64_t>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path, std::string("invalid manifest field: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(manifest_path, e.what());
  }
  try {
    b.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(manifest_path, e.what());
  }
  return b;
}

}  // namespace fym::io
