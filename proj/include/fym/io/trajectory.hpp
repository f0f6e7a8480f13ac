#pragma once

// Trajectory map dump: "FYT1" | u64 height | u64 width | u64 channels | u32 frame | f64 values,
// little-endian, channels innermost.

#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "fym/io/checkpoint.hpp"
#include "fym/trajectory.hpp"

namespace fym::io {

inline constexpr char kTrajectoryMagic[4] = {'F', 'Y', 'T', '1'};

inline void write_trajectory(const fs::path& path, const trajectory::TrajectoryMap& map) {
  std::vector<unsigned char> out(std::begin(kTrajectoryMagic), std::end(kTrajectoryMagic));
  detail::put_le<std::uint64_t>(out, map.height);
  detail::put_le<std::uint64_t>(out, map.width);
  detail::put_le<std::uint64_t>(out, map.channels);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.frame));
  for (double v : map.values) detail::put_le<double>(out, v);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(path, "write failed");
}

inline trajectory::TrajectoryMap read_trajectory(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open file");
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 4 || std::memcmp(data.data(), kTrajectoryMagic, 4) != 0) throw IoError(path, "bad trajectory magic");
  detail::Reader r(data, data.size(), path);
  r.bytes(4, "magic");
  trajectory::TrajectoryMap map;
  map.height = static_cast<std::size_t>(r.get<std::uint64_t>("height"));
  map.width = static_cast<std::size_t>(r.get<std::uint64_t>("width"));
  map.channels = static_cast<std::size_t>(r.get<std::uint64_t>("channels"));
  map.frame = static_cast<int>(r.get<std::uint32_t>("frame"));
  const std::size_t n = map.height * map.width * map.channels;
  if (n != (data.size() - 32) / 8 || (data.size() - 32) % 8 != 0) throw IoError(path, "payload size does not match header");
  map.values.resize(n);
  for (double& v : map.values) v = r.get<double>("values");
  return map;
}

}  // namespace fym::io
