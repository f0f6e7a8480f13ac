#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fym/metrics/flow.hpp"
#include "fym/metrics/scores.hpp"
#include "fym/synth.hpp"

using namespace fym;
using namespace fym::metrics;

namespace {

double mean_endpoint_error(const FlowField& f, Point2 truth) {
  double e = 0.0;
  for (const Point2& d : f.pixels) e += std::hypot(d.x - truth.x, d.y - truth.y);
  return e / static_cast<double>(f.size());
}

const std::vector<double> kRendering{0.22, 0.46, 0.23, 0.03, 0.23, 0.17, 0.12, 0.20, 0.07, 0.04};
const std::vector<double> kOurs{0.21, 0.25, 0.15, 0.06, 0.13, 0.09, 0.08, 0.16, 0.08, 0.03};
const std::vector<double> kPortraitGen{0.13, 0.27, 0.05, 0.19, 0.12, 0.04, 0.05, 0.26, 0.04, 0.10};

}  // namespace

TEST(Flow, IdenticalFramesGiveZero) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto fr = synth::textured_translation(32, 32, 1, {0, 0}, seed);
    const FlowField f = optical_flow(fr[0], fr[0]);
    for (const Point2& d : f.pixels) {
      EXPECT_LE(std::abs(d.x), 1e-6);
      EXPECT_LE(std::abs(d.y), 1e-6);
    }
  }
  const auto clip = synth::generate({}, 2, 32, 32);
  EXPECT_LE(mean_magnitude(optical_flow(clip.frames[0], clip.frames[0])), 1e-6);
}

TEST(Flow, RecoversKnownTranslations) {
  for (Point2 v : {Point2{2, 0}, Point2{0, 3}, Point2{-2, 1}, Point2{1, -1}}) {
    const auto fr = synth::textured_translation(32, 32, 2, v, 5);
    const FlowField f = optical_flow(fr[0], fr[1]);
    EXPECT_LE(mean_endpoint_error(f, v), 0.25) << v.x << "," << v.y;
  }
}

TEST(Flow, ForwardBackwardCancel) {
  const auto fr = synth::textured_translation(32, 32, 2, {2, 1}, 6);
  const FlowField f = optical_flow(fr[0], fr[1]), b = optical_flow(fr[1], fr[0]);
  double fb = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) fb += std::hypot(f.pixels[i].x + b.pixels[i].x, f.pixels[i].y + b.pixels[i].y);
  EXPECT_LE(fb / f.size(), 0.5);
}

TEST(Flow, ValidatesInputs) {
  EXPECT_THROW(optical_flow(Image(8, 8), Image(8, 8)), std::invalid_argument);
  EXPECT_THROW(optical_flow(Image(32, 32), Image(32, 16)), std::invalid_argument);
  LucasKanadeOptions bad;
  bad.window = 4;
  EXPECT_THROW(optical_flow(Image(32, 32), Image(32, 32), bad), std::invalid_argument);
}

TEST(Series, StaticClipIsZero) {
  const auto clip = synth::generate({synth::MotionKind::translate, {0.0, 0.0}, 1}, 5, 32, 32);
  for (double m : flow_series(clip.frames)) EXPECT_LE(m, 1e-6);
}

TEST(Series, LengthAndMagnitudeOfTranslation) {
  const auto fr = synth::textured_translation(32, 32, 6, {2, 0}, 7);
  const auto s = flow_series(fr);
  ASSERT_EQ(s.size(), 5u);
  for (double m : s) EXPECT_NEAR(m, 2.0, 0.25);
  EXPECT_THROW(flow_series(std::span(fr).first(1)), std::invalid_argument);
}

TEST(Consistency, SelfIsZero) {
  EXPECT_EQ(consistency_total_error(kRendering, kRendering), 0.0);
  const auto clip = synth::generate({synth::MotionKind::orbit, {5.0, 0.25}, 2}, 6, 32, 32);
  const auto s = flow_series(clip.frames);
  EXPECT_EQ(consistency_total_error(s, s), 0.0);
}

TEST(Consistency, PublishedRows) {
  EXPECT_NEAR(consistency_total_error(kOurs, kRendering), 0.61, 1e-9);
  EXPECT_NEAR(consistency_total_error(kPortraitGen, kRendering), 1.08, 1e-9);
}

TEST(Consistency, PseudometricOnRandomSeries) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(9), b(9), c(9);
    for (auto* v : {&a, &b, &c}) {
      for (auto& x : *v) x = u(rng);
    }
    const double ab = consistency_total_error(a, b), bc = consistency_total_error(b, c), ac = consistency_total_error(a, c);
    EXPECT_GE(ab, 0.0);
    EXPECT_EQ(ab, consistency_total_error(b, a));
    EXPECT_LE(ac, ab + bc + 1e-12);
  }
  EXPECT_THROW(consistency_total_error(std::vector<double>(3), std::vector<double>(4)), std::invalid_argument);
}

TEST(Expression, ZeroOnIdentical) {
  const auto clip = synth::generate({}, 4, 32, 32);
  EXPECT_EQ(expression_error(clip.landmarks, clip.landmarks), 0.0);
}

TEST(Expression, MeanEuclideanDistance) {
  const std::vector<dram::LandmarkSet> ref{{{0, 0}, {10, 10}}}, pred{{{3, 4}, {16, 18}}};
  EXPECT_EQ(expression_error(ref, pred), 7.5);
  const std::vector<dram::LandmarkSet> one_ref{{{1, 1}}}, one_pred{{{4, 5}}};
  EXPECT_EQ(expression_error(one_ref, one_pred), 5.0);
}

TEST(Expression, UniformShiftGivesShiftLength) {
  const auto clip = synth::generate({}, 4, 32, 32);
  auto shifted = clip.landmarks;
  for (auto& s : shifted) {
    for (auto& p : s) p.x += 1.0;
  }
  EXPECT_NEAR(expression_error(clip.landmarks, shifted), 1.0, 1e-12);
  EXPECT_THROW(expression_error(clip.landmarks, std::span(shifted).first(2)), std::invalid_argument);
}

TEST(Psnr, IdenticalIsSentinel) {
  const Image a(8, 8, 0.3);
  EXPECT_EQ(psnr(a, a), kPsnrIdentical);
}

TEST(Psnr, KnownValues) {
  EXPECT_NEAR(psnr(Image(8, 8, 0.0), Image(8, 8, 1.0)), 0.0, 1e-12);
  EXPECT_NEAR(psnr(Image(8, 8, 0.5), Image(8, 8, 0.6)), 20.0, 1e-9);
  EXPECT_THROW(psnr(Image(8, 8), Image(4, 4)), std::invalid_argument);
}
