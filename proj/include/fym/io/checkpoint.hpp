#pragma once

// Checkpoint layout, all integers little-endian:
//   "FYM1" | u32 version | u64 n | n bytes of JSON config | u64 param count |
//   per param: u32 name length, name, u32 rank, u64 dims[rank], f64 values |
//   u32 CRC-32 of every preceding byte.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <zlib.h>

#include <json.hpp>

#include "fym/flowmatch/model.hpp"
#include "fym/io/pgm.hpp"

namespace fym::io {

inline constexpr char kCheckpointMagic[4] = {'F', 'Y', 'M', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  flowmatch::ModelConfig model;
  double t_min = 1e-3;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();  // phase, steps, seed, ...
  tensor::ParamStore params;
};

inline nlohmann::ordered_json config_to_json(const flowmatch::ModelConfig& c, double t_min) {
  nlohmann::ordered_json j;
  j["height"] = c.height;
  j["width"] = c.width;
  j["hidden"] = c.hidden;
  j["attention_dim"] = c.attention_dim;
  j["position_frequencies"] = c.position_frequencies;
  j["time_frequencies"] = c.time_frequencies;
  j["grid_h"] = c.grid_h;
  j["grid_w"] = c.grid_w;
  j["table_init"] = c.table_init;
  j["hash"] = {{"levels", c.hash.levels},     {"features", c.hash.features}, {"table_size", c.hash.table_size},
               {"r_min", c.hash.r_min},       {"r_max", c.hash.r_max},       {"primes", c.hash.primes}};
  j["t_min"] = t_min;
  return j;
}

inline flowmatch::ModelConfig config_from_json(const nlohmann::json& j) {
  flowmatch::ModelConfig c;
  c.height = j.at("height").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.hidden = j.at("hidden").get<int>();
  c.attention_dim = j.at("attention_dim").get<int>();
  c.position_frequencies = j.at("position_frequencies").get<int>();
  c.time_frequencies = j.at("time_frequencies").get<int>();
  c.grid_h = j.at("grid_h").get<std::size_t>();
  c.grid_w = j.at("grid_w").get<std::size_t>();
  c.table_init = j.at("table_init").get<double>();
  const auto& h = j.at("hash");
  c.hash.levels = h.at("levels").get<int>();
  c.hash.features = h.at("features").get<int>();
  c.hash.table_size = h.at("table_size").get<std::uint64_t>();
  c.hash.r_min = h.at("r_min").get<double>();
  c.hash.r_max = h.at("r_max").get<double>();
  c.hash.primes = h.at("primes").get<std::array<std::uint64_t, 3>>();
  return c;
}

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& data, std::size_t end, const fs::path& path)
      : data_(data), end_(end), path_(path) {}

  template <class T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > end_) throw IoError(path_, std::string("truncated checkpoint while reading ") + what);
    unsigned char b[sizeof(T)];
    std::memcpy(b, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    if (n > end_ - pos_) throw IoError(path_, std::string("truncated checkpoint while reading ") + what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const noexcept { return pos_ == end_; }

 private:
  const std::vector<unsigned char>& data_;
  std::size_t end_;
  std::size_t pos_ = 0;
  const fs::path& path_;
};

inline std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
  std::vector<unsigned char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  nlohmann::ordered_json cfg = config_to_json(ck.model, ck.t_min);
  cfg["meta"] = ck.meta;
  const std::string text = cfg.dump();
  detail::put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  detail::put_le<std::uint64_t>(out, ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const std::string& name = ck.params.name(i);
    const tensor::Array& a = ck.params.value(i);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.rank()));
    for (std::size_t d : a.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : a.data()) detail::put_le<double>(out, v);
  }
  detail::put_le<std::uint32_t>(out, detail::crc32_of(out.data(), out.size()));
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& data, const fs::path& path) {
  if (data.size() < 8 || std::memcmp(data.data(), kCheckpointMagic, 4) != 0) {
    throw IoError(path, "not a checkpoint (bad magic)");
  }
  detail::Reader header(data, data.size(), path);
  header.bytes(4, "magic");
  const auto version = header.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw IoError(path, "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
  }
  if (data.size() < 12) throw IoError(path, "truncated checkpoint");
  const std::size_t body = data.size() - 4;
  detail::Reader tail(data, data.size(), path);
  tail.bytes(body, "payload");
  const auto stored = tail.get<std::uint32_t>("checksum");
  if (stored != detail::crc32_of(data.data(), body)) throw IoError(path, "checksum mismatch (file is corrupt)");

  detail::Reader r(data, body, path);
  r.bytes(8, "header");
  Checkpoint ck;
  const auto cfg_len = r.get<std::uint64_t>("config length");
  try {
    const auto cfg = nlohmann::json::parse(r.bytes(cfg_len, "config"));
    ck.model = config_from_json(cfg);
    ck.t_min = cfg.at("t_min").get<double>();
    if (cfg.contains("meta")) ck.meta = cfg.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, std::string("invalid config block: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>("parameter count");
  for (std::uint64_t p = 0; p < count; ++p) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name = r.bytes(name_len, "parameter name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw IoError(path, "parameter '" + name + "' has implausible rank " + std::to_string(rank));
    tensor::Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("dimension")));
    std::vector<double> values(tensor::shape_size(shape));
    for (double& v : values) v = r.get<double>("parameter values");
    try {
      ck.params.add(std::move(name), tensor::Array(std::move(shape), std::move(values)));
    } catch (const std::invalid_argument& e) {
      throw IoError(path, e.what());
    }
  }
  if (!r.done()) throw IoError(path, "trailing bytes after parameters");
  return ck;
}

inline void write_checkpoint(const fs::path& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path, "write failed");
}

inline Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(data, path);
}

inline Checkpoint make_checkpoint(const flowmatch::VelocityModel& model, double t_min,
                                  nlohmann::ordered_json meta = nlohmann::ordered_json::object()) {
  return Checkpoint{model.config(), t_min, std::move(meta), model.params()};
}

/// Model rebuilt from a checkpoint; rejects parameter sets that do not fit the stored config.
inline flowmatch::VelocityModel load_model(const Checkpoint& ck, const fs::path& path) {
  try {
    return flowmatch::VelocityModel(ck.model, ck.params);
  } catch (const std::invalid_argument& e) {
    throw IoError(path, e.what());
  }
}

}  // namespace fym::io
