#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fym/hashgrid.hpp"

namespace oracle {

using fym::hashgrid::HashGridConfig;
namespace tensor = fym::tensor;

// Written from the definitions alone: explicit 8-corner loop, own resolution and hash.
inline std::vector<double> brute_force_encode(const HashGridConfig& c, const tensor::Array& table, double x, double y, double tau,
                                       const std::vector<int>& resolutions) {
  std::vector<double> out;
  for (int l = 0; l < c.levels; ++l) {
    const double R = resolutions[l];
    const double sx = x * R, sy = y * R, st = tau * R;
    const double fx = std::floor(sx), fy = std::floor(sy), ft = std::floor(st);
    for (int f = 0; f < c.features; ++f) {
      double acc = 0.0;
      for (int dx = 0; dx <= 1; ++dx) {
        for (int dy = 0; dy <= 1; ++dy) {
          for (int dt = 0; dt <= 1; ++dt) {
            const double wx = dx ? sx - fx : 1.0 - (sx - fx);
            const double wy = dy ? sy - fy : 1.0 - (sy - fy);
            const double wt = dt ? st - ft : 1.0 - (st - ft);
            const std::uint64_t ix = static_cast<std::uint64_t>(fx) + dx;
            const std::uint64_t iy = static_cast<std::uint64_t>(fy) + dy;
            const std::uint64_t it = static_cast<std::uint64_t>(ft) + dt;
            const std::uint64_t h = ((ix * c.primes[0]) ^ (iy * c.primes[1]) ^ (it * c.primes[2])) % c.table_size;
            acc += wx * wy * wt * table[(static_cast<std::uint64_t>(l) * c.table_size + h) * c.features + f];
          }
        }
      }
      out.push_back(acc);
    }
  }
  return out;
}

}  // namespace oracle
