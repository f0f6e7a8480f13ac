#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracle.hpp"

#include "fym/hashgrid.hpp"
#include "fym/tensor/gradcheck.hpp"

using namespace fym;
using namespace fym::hashgrid;

namespace {

HashGridConfig small_config() {
  HashGridConfig c;
  c.levels = 2;
  c.features = 2;
  c.table_size = 16;
  c.r_min = 16.0;
  c.r_max = 512.0;
  return c;
}

}  // namespace

TEST(Config, RejectsInvalidSettings) {
  HashGridConfig c;
  c.table_size = 12;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.levels = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.r_min = 64.0;
  c.r_max = 32.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.primes = {1, 1, 3};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Resolution, DefaultScheduleEndpoints) {
  const HashGridConfig c;
  EXPECT_EQ(level_resolution(c, 0), 16);
  EXPECT_EQ(level_resolution(c, 15), 512);
}

TEST(Resolution, DefaultScheduleMatchesIntegerCubeRoot) {
  // n = 32^(1/15) = 2^(1/3), so R_l = floor(16 * 2^(l/3)) is the largest R with R^3 <= 4096 * 2^l.
  const HashGridConfig c;
  int previous = 0;
  for (int l = 0; l < 16; ++l) {
    const std::int64_t bound = std::int64_t{4096} << l;
    std::int64_t r = 1;
    while ((r + 1) * (r + 1) * (r + 1) <= bound) ++r;
    EXPECT_EQ(level_resolution(c, l), r) << "level " << l;
    EXPECT_GE(level_resolution(c, l), previous);
    previous = level_resolution(c, l);
  }
}

TEST(Resolution, MonotoneForRandomConfigs) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(1.0, 64.0);
  for (int trial = 0; trial < 200; ++trial) {
    HashGridConfig c;
    c.levels = 1 + static_cast<int>(rng() % 20);
    c.r_min = u(rng);
    c.r_max = c.r_min * u(rng);
    int prev = 0;
    for (int l = 0; l < c.levels; ++l) {
      const int r = level_resolution(c, l);
      EXPECT_GE(r, prev);
      prev = r;
    }
  }
}

TEST(Corners, OriginIsDegenerate) {
  const Corners c = corner_coords({0.0, 0.0, 0.0}, 37);
  for (int k = 0; k < 8; ++k) EXPECT_EQ(c.vertex[k], (std::array<std::uint64_t, 3>{0, 0, 0}));
  EXPECT_EQ(c.weight[0], 1.0);
  for (int k = 1; k < 8; ++k) EXPECT_EQ(c.weight[k], 0.0);
}

TEST(Corners, CubeCenterAtUnitResolution) {
  const Corners c = corner_coords({0.5, 0.5, 0.5}, 1);
  for (int k = 0; k < 8; ++k) {
    EXPECT_EQ(c.weight[k], 0.125);
    for (int a = 0; a < 3; ++a) EXPECT_EQ(c.vertex[k][a], static_cast<std::uint64_t>((k >> a) & 1));
  }
}

TEST(Corners, ExactOnLinearFields) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const SpacePoint p{u(rng), u(rng), u(rng)};
    const Corners c = corner_coords(p, 7);
    double interp = 0.0, mass = 0.0;
    for (int k = 0; k < 8; ++k) {
      const auto& v = c.vertex[k];
      interp += c.weight[k] * (v[0] + 2.0 * v[1] + 3.0 * v[2]);
      mass += c.weight[k];
    }
    EXPECT_NEAR(interp, 7.0 * (p.x + 2.0 * p.y + 3.0 * p.tau), 1e-12);
    EXPECT_NEAR(mass, 1.0, 1e-15);
  }
}

TEST(Hash, KnownValues) {
  HashGridConfig c;
  c.table_size = 16;
  EXPECT_EQ(hash_index({0, 0, 0}, c), 0u);
  EXPECT_EQ(hash_index({1, 0, 0}, c), 1u);
  EXPECT_EQ(hash_index({0, 1, 0}, c), 2654435761u % 16);
}

TEST(Hash, MatchesFormulaAndStaysInRange) {
  std::mt19937_64 rng(13);
  HashGridConfig c;
  for (int trial = 0; trial < 5000; ++trial) {
    const std::array<std::uint64_t, 3> v{rng() % 600, rng() % 600, rng() % 600};
    const std::uint64_t want = ((v[0] * 1u) ^ (v[1] * 2654435761u) ^ (v[2] * 805459861u)) % c.table_size;
    ASSERT_EQ(hash_index(v, c), want);
    // A step along y flips exactly the pi2 contribution.
    const std::array<std::uint64_t, 3> w{v[0], v[1] + 1, v[2]};
    EXPECT_EQ(hash_index(w, c) ^ hash_index(v, c), (((v[1] + 1) * 2654435761u) ^ (v[1] * 2654435761u)) % c.table_size);
  }
}

TEST(Encode, MatchesBruteForceOnSmallGrid) {
  const HashGridConfig c = small_config();
  std::mt19937_64 rng(14);
  const FeatureTable table = FeatureTable::random(c, 1.0, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng), y = u(rng), t = u(rng);
    const auto got = encode(table, {x, y, t});
    const auto want = oracle::brute_force_encode(c, table.values, x, y, t, {16, 512});
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t k = 0; k < got.size(); ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Encode, MatchesBruteForceOnDefaultGrid) {
  const HashGridConfig c;
  std::vector<int> res;
  for (int l = 0; l < c.levels; ++l) res.push_back(level_resolution(c, l));
  std::mt19937_64 rng(15);
  const FeatureTable table = FeatureTable::random(c, 1.0, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng), y = u(rng), t = u(rng);
    const auto got = encode(table, {x, y, t});
    const auto want = oracle::brute_force_encode(c, table.values, x, y, t, res);
    for (std::size_t k = 0; k < got.size(); ++k) ASSERT_NEAR(got[k], want[k], 1e-12);
  }
}

TEST(Encode, ConstantTableGivesConstant) {
  FeatureTable table(HashGridConfig{}, 0.37);
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    for (double v : encode(table, {u(rng), u(rng), u(rng)})) EXPECT_NEAR(v, 0.37, 1e-15);
  }
}

TEST(Encode, VertexPointReadsHashedEntriesDirectly) {
  // Resolutions 4 and 8: the point (0.25, 0.5, 0.75) is a lattice vertex at both.
  HashGridConfig c;
  c.levels = 2;
  c.r_min = 4.0;
  c.r_max = 8.0;
  std::mt19937_64 rng(17);
  const FeatureTable table = FeatureTable::random(c, 1.0, rng);
  const auto out = encode(table, {0.25, 0.5, 0.75});
  for (int l = 0; l < 2; ++l) {
    const std::uint64_t r = l == 0 ? 4 : 8;
    const std::uint64_t h = hash_index({r / 4, r / 2, 3 * r / 4}, c);
    for (int f = 0; f < 2; ++f) EXPECT_EQ(out[l * 2 + f], table.values[(l * c.table_size + h) * 2 + f]);
  }
}

TEST(Encode, RejectsOutOfRangePoints) {
  FeatureTable table(HashGridConfig{});
  EXPECT_THROW(encode(table, {1.1, 0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(encode(table, {0.0, -0.01, 0.0}), std::invalid_argument);
  EXPECT_THROW(encode(table, {0.0, 0.0, std::nan("")}), std::invalid_argument);
}

TEST(Encode, BoundaryCoordinatesStayInBounds) {
  const HashGridConfig c;
  FeatureTable table(c, 1.0);
  for (double v : encode(table, {1.0, 1.0, 1.0})) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
  const HashGridConfig c = small_config();
  tensor::Array grad = FeatureTable(c).values;
  std::vector<double> upstream(c.width(), 0.0);
  encode_backward(c, {0.3, 0.6, 0.9}, upstream, grad);
  for (double v : grad.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, VertexPointPutsFullSliceOnOneEntryPerLevel) {
  HashGridConfig c;
  c.levels = 2;
  c.r_min = 4.0;
  c.r_max = 8.0;
  tensor::Array grad = FeatureTable(c).values;
  const std::vector<double> upstream{1.5, -2.0, 0.25, 4.0};
  encode_backward(c, {0.25, 0.5, 0.75}, upstream, grad);
  for (int l = 0; l < 2; ++l) {
    std::size_t nonzero = 0;
    for (std::uint64_t e = 0; e < c.table_size; ++e) {
      const double g0 = grad[(l * c.table_size + e) * 2];
      const double g1 = grad[(l * c.table_size + e) * 2 + 1];
      if (g0 != 0.0 || g1 != 0.0) {
        ++nonzero;
        EXPECT_EQ(g0, upstream[l * 2]);
        EXPECT_EQ(g1, upstream[l * 2 + 1]);
      }
    }
    EXPECT_EQ(nonzero, 1u);
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  const HashGridConfig c = small_config();
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  tensor::ParamStore store;
  store.add("table", FeatureTable::random(c, 0.5, rng).values);
  std::vector<SpacePoint> pts(50);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  tensor::Array weights(tensor::Shape{50, static_cast<std::size_t>(c.width())}, 0.0);
  for (auto& v : weights.data()) v = u(rng) - 0.5;
  const tensor::LossBuilder fn = [&](tensor::Tape& tape, const tensor::ParamStore& s) {
    return tensor::sum(tensor::mul(encode_points(tape.param(s, "table"), c, pts), tape.constant(weights)));
  };
  std::vector<tensor::Probe> probes;
  for (std::size_t i = 0; i < store.value(0).size(); ++i) probes.push_back({0, i});
  const auto r = tensor::finite_diff_check(fn, store, probes);
  for (const auto& p : r.results) EXPECT_NEAR(p.analytic, p.numeric, 1e-6);
}

TEST(Backward, TapeOpAgreesWithStandaloneBackward) {
  const HashGridConfig c;
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  tensor::ParamStore store;
  store.add("table", FeatureTable::random(c, 0.5, rng).values);
  const std::vector<SpacePoint> pts{{u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}};
  tensor::Tape tape;
  const tensor::GradMap g = tape.backward(tensor::sum(encode_points(tape.param(store, "table"), c, pts)), store);
  tensor::Array want = tensor::Array::zeros_like(store.value(0));
  const std::vector<double> ones(c.width(), 1.0);
  for (const auto& p : pts) encode_backward(c, p, ones, want);
  EXPECT_EQ(g[0], want);
}
