#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fym/synth.hpp"
#include "fym/trajectory.hpp"

using namespace fym;
using namespace fym::trajectory;

namespace {

Mask disk_mask(std::size_t n) {
  Mask m(n, n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double dr = r - n / 2.0, dc = c - n / 2.0;
      m.at(r, c) = dr * dr + dc * dc < n * n / 9.0 ? 1 : 0;
    }
  }
  return m;
}

hashgrid::FeatureTable random_table(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return hashgrid::FeatureTable::random(hashgrid::HashGridConfig{}, 0.5, rng);
}

}  // namespace

TEST(TrajectoryMap, FirstFrameIsBitwiseZero) {
  const auto table = random_table(1);
  const Mask full(32, 32, 1);
  const TrajectoryMap m = trajectory_map(table, 1, full, 32, 32, 16);
  for (double v : m.values) EXPECT_EQ(v, 0.0);
}

TEST(TrajectoryMap, BackgroundIsZero) {
  const auto table = random_table(2);
  const Mask mask = disk_mask(32);
  const TrajectoryMap m = trajectory_map(table, 9, mask, 32, 32, 16);
  bool any_foreground_nonzero = false;
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t c = 0; c < 32; ++c) {
      for (std::size_t k = 0; k < m.channels; ++k) {
        if (!mask.at(r, c)) {
          EXPECT_EQ(m.pixel(r, c)[k], 0.0);
        } else if (m.pixel(r, c)[k] != 0.0) {
          any_foreground_nonzero = true;
        }
      }
    }
  }
  EXPECT_TRUE(any_foreground_nonzero);
}

TEST(TrajectoryMap, AllBackgroundMaskGivesZeroMap) {
  const auto table = random_table(3);
  const TrajectoryMap m = trajectory_map(table, 5, Mask(16, 16, 0), 16, 16, 8);
  for (double v : m.values) EXPECT_EQ(v, 0.0);
}

TEST(TrajectoryMap, ConstantTableGivesZeroMaps) {
  const hashgrid::FeatureTable table(hashgrid::HashGridConfig{}, 0.8);
  for (int f = 1; f <= 8; ++f) {
    const TrajectoryMap m = trajectory_map(table, f, Mask(16, 16, 1), 16, 16, 8);
    for (double v : m.values) EXPECT_NEAR(v, 0.0, 1e-15);
  }
}

TEST(TrajectoryMap, MatchesEncodingDifference) {
  const auto table = random_table(4);
  const Mask full(16, 16, 1);
  const TrajectoryMap m = trajectory_map(table, 3, full, 16, 16, 5);
  const auto now = hashgrid::encode(table, {5.0 / 15.0, 7.0 / 15.0, 0.5});
  const auto first = hashgrid::encode(table, {5.0 / 15.0, 7.0 / 15.0, 0.0});
  for (std::size_t k = 0; k < m.channels; ++k) EXPECT_EQ(m.pixel(7, 5)[k], now[k] - first[k]);
}

TEST(TrajectoryMap, RejectsBadInputs) {
  const auto table = random_table(5);
  EXPECT_THROW(trajectory_map(table, 0, Mask(16, 16, 1), 16, 16, 8), std::invalid_argument);
  EXPECT_THROW(trajectory_map(table, 9, Mask(16, 16, 1), 16, 16, 8), std::invalid_argument);
  EXPECT_THROW(trajectory_map(table, 2, Mask(8, 16, 1), 16, 16, 8), std::invalid_argument);
}

TEST(Tokens, FullResolutionGridIsIdentity) {
  const auto table = random_table(6);
  const TrajectoryMap m = trajectory_map(table, 4, disk_mask(8), 8, 8, 6);
  const TrajectoryTokens t = downsample_to_tokens(m, 8, 8);
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      for (std::size_t k = 0; k < m.channels; ++k) EXPECT_EQ(t.features.at(r * 8 + c, k), m.pixel(r, c)[k]);
    }
  }
}

TEST(Tokens, ZeroMapGivesZeroTokensWithUnitWeights) {
  TrajectoryMap m{16, 16, 4, 2, std::vector<double>(16 * 16 * 4, 0.0)};
  const TrajectoryTokens t = downsample_to_tokens(m, 4, 4);
  EXPECT_EQ(t.count(), 16u);
  for (double v : t.features.data()) EXPECT_EQ(v, 0.0);
  for (double w : t.weights) EXPECT_EQ(w, 1.0);
}

TEST(Tokens, SinglePixelIsAveragedOverItsCell) {
  TrajectoryMap m{4, 4, 1, 2, std::vector<double>(16, 0.0)};
  m.pixel(2, 3)[0] = 5.0;
  const TrajectoryTokens t = downsample_to_tokens(m, 2, 2);
  EXPECT_EQ(t.features.at(3, 0), 1.25);
  EXPECT_EQ(t.features.at(0, 0), 0.0);
  EXPECT_EQ(t.features.at(1, 0), 0.0);
  EXPECT_EQ(t.features.at(2, 0), 0.0);
}

TEST(Tokens, GridMustDivideFrame) {
  TrajectoryMap m{10, 10, 1, 2, std::vector<double>(100, 0.0)};
  EXPECT_THROW(downsample_to_tokens(m, 3, 3), std::invalid_argument);
}

TEST(TokenWeights, UnitWeightsLeaveTokensUnchanged) {
  const auto table = random_table(7);
  const TrajectoryTokens t = downsample_to_tokens(trajectory_map(table, 5, disk_mask(16), 16, 16, 8), 4, 4);
  const TrajectoryTokens w = apply_token_weights(t, std::vector<double>(16, 1.0));
  EXPECT_EQ(w.features, t.features);
}

TEST(TokenWeights, LossOf25ScalesBy26) {
  const auto table = random_table(8);
  const TrajectoryTokens t = downsample_to_tokens(trajectory_map(table, 5, Mask(16, 16, 1), 16, 16, 8), 4, 4);
  std::vector<double> weights(16, 1.0);
  weights[6] = 1.0 + 25.0;
  const TrajectoryTokens w = apply_token_weights(t, weights);
  for (std::size_t k = 0; k < t.features.cols(); ++k) {
    EXPECT_EQ(w.features.at(6, k), 26.0 * t.features.at(6, k));
    EXPECT_EQ(w.features.at(5, k), t.features.at(5, k));
  }
  EXPECT_EQ(w.positions, t.positions);
}

TEST(TokenWeights, ZeroFeatureStaysZero) {
  TrajectoryMap m{4, 4, 2, 3, std::vector<double>(32, 0.0)};
  const TrajectoryTokens w = apply_token_weights(downsample_to_tokens(m, 2, 2), {1e6, 3.0, 26.0, 1.0});
  for (double v : w.features.data()) EXPECT_EQ(v, 0.0);
}

TEST(TokenWeights, RejectsNegativeOrMiscounted) {
  TrajectoryMap m{4, 4, 1, 2, std::vector<double>(16, 0.0)};
  const TrajectoryTokens t = downsample_to_tokens(m, 2, 2);
  EXPECT_THROW(apply_token_weights(t, {1.0, 1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(apply_token_weights(t, {1.0, -1.0, 1.0, 1.0}), std::invalid_argument);
}

TEST(TokenFeatures, TapeVersionMatchesMapPoolWeightPipeline) {
  const auto table = random_table(9);
  const auto clip = synth::generate({synth::MotionKind::translate, {2.0, 1.0}, 4}, 8, 32, 32);
  std::vector<double> weights(64);
  for (std::size_t i = 0; i < 64; ++i) weights[i] = 1.0 + static_cast<double>(i % 5);
  tensor::ParamStore store;
  store.add("table", table.values);
  for (int f : {1, 4, 8}) {
    const auto want = apply_token_weights(
        downsample_to_tokens(trajectory_map(table, f, clip.masks[f - 1], 32, 32, 8), 8, 8), weights);
    tensor::Tape tape(false);
    const auto got = token_features(tape.param(store, "table"), table.config, f, 8, clip.masks[f - 1], 8, 8, weights);
    for (std::size_t i = 0; i < want.features.size(); ++i) EXPECT_NEAR(got.value()[i], want.features[i], 1e-14);
  }
}

TEST(Positions, EmbeddingLayout) {
  const auto e = position_embedding(0.25, 0.5, 2);
  ASSERT_EQ(e.size(), position_width(2));
  EXPECT_EQ(e[0], 0.25);
  EXPECT_EQ(e[1], 0.5);
}
