#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fvx/beamform.hpp"
#include "fvx/rng.hpp"
#include "support.hpp"

using namespace fvx;
using namespace fvx::beamform;
using fvx::testing::plane_wave;

namespace {

DispersionImage hand_image(const DispersionGrid& grid, std::initializer_list<double> values) {
  DispersionImage im;
  im.grid = grid;
  im.power = GridD(grid.n_velocities(), grid.n_frequencies());
  std::copy(values.begin(), values.end(), im.power.values().begin());
  im.degenerate_columns.assign(grid.n_frequencies(), 0);
  return im;
}

DispersionGrid tiny_grid() {
  DispersionGrid g;
  g.f_min_hz = 5.0;
  g.f_max_hz = 6.0;
  g.v_min_mps = 100.0;
  g.v_max_mps = 104.5;
  return g;
}

// Ricker pulses with linear moveout; zero at both ends of the record.
elastodyn::ShotGather transient_gather(std::size_t samples = 800, double lag_s = 0.0) {
  elastodyn::ShotGather g;
  g.geometry = elastodyn::linear_array(48, 1.0, 28.0, 5.0);
  g.rate_hz = 400.0;
  g.traces = GridD(48, samples);
  for (std::size_t r = 0; r < 48; ++r)
    for (std::size_t k = 0; k < samples; ++k) {
      const double t = static_cast<double>(k) / 400.0 - lag_s;
      double v = 0.0;
      for (auto [c, fc, amp] : {std::tuple{260.0, 25.0, 1.0}, std::tuple{420.0, 12.0, 0.6}}) {
        const double a = std::numbers::pi * fc * (t - 0.2 - (5.0 + static_cast<double>(r)) / c);
        v += amp * (1.0 - 2.0 * a * a) * std::exp(-a * a) / std::sqrt(5.0 + static_cast<double>(r));
      }
      g.traces(r, k) = v;
    }
  return g;
}

double peak_at(const DispersionImage& im, double f_hz) {
  for (const auto& p : extract_peaks(im))
    if (std::abs(p.frequency_hz - f_hz) < 1e-9) return p.velocity_mps;
  return std::nan("");
}

}  // namespace

TEST(DispersionGridTest, DefaultGridHas76FrequenciesAnd400Velocities) {
  const DispersionGrid g;
  EXPECT_EQ(g.n_frequencies(), 76u);
  EXPECT_EQ(g.n_velocities(), 400u);
  EXPECT_DOUBLE_EQ(g.velocity(0), 100.0);
  EXPECT_DOUBLE_EQ(g.velocity(399), 997.75);
  EXPECT_DOUBLE_EQ(g.frequency(75), 80.0);
}

TEST(Fdbf, MonochromaticPlaneWavePeaksAtItsVelocity) {
  const auto g = plane_wave(20.0, 300.0, 48, 1.0, 400.0, 800);
  const auto im = normalize_per_frequency(fdbf(g));
  EXPECT_NEAR(peak_at(im, 20.0), 300.0, 2.25);
}

TEST(Fdbf, IdenticalTracesPeakAtTheHighestTrialVelocity) {
  elastodyn::ShotGather g = plane_wave(20.0, 1e12, 2, 1.0, 400.0, 800);
  g.traces = GridD(2, 800);
  for (std::size_t k = 0; k < 800; ++k) g.traces(0, k) = g.traces(1, k) = std::sin(0.3 * static_cast<double>(k));
  const auto im = fdbf(g);
  EXPECT_DOUBLE_EQ(peak_at(im, 20.0), DispersionGrid{}.velocity(399));
}

TEST(Fdbf, BaseGatherGivesA400By76Image) {
  const auto im = fdbf(transient_gather());
  EXPECT_EQ(im.power.rows(), 400u);
  EXPECT_EQ(im.power.cols(), 76u);
  EXPECT_EQ(im.normalization, Normalization::raw);
}

TEST(Fdbf, RawPowerIsNonnegative) {
  const auto im = fdbf(transient_gather());
  for (double v : im.power.values()) EXPECT_GE(v, 0.0);
}

TEST(Fdbf, SingleReceiverIsRejected) {
  auto g = plane_wave(20.0, 300.0, 1, 1.0, 400.0, 800);
  EXPECT_THROW(fdbf(g), ValidationError);
}

TEST(Fdbf, GridAboveNyquistIsRejected) {
  auto g = plane_wave(20.0, 300.0, 4, 1.0, 100.0, 200);
  EXPECT_THROW(fdbf(g), ValidationError);
}

TEST(Fdbf, ZeroGatherIsFlaggedDegenerate) {
  auto g = plane_wave(20.0, 300.0, 4, 1.0, 400.0, 800);
  for (auto& v : g.traces.values()) v = 0.0;
  const auto im = normalize_per_frequency(fdbf(g));
  EXPECT_TRUE(im.degenerate);
  for (double v : im.power.values()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(extract_peaks(im).empty());
}

TEST(Fdbf, NormalizedImageIsInvariantToTraceScaling) {
  const auto g = transient_gather();
  auto s = g;
  for (auto& v : s.traces.values()) v *= 7.3;
  const auto a = normalize_per_frequency(fdbf(g));
  const auto b = normalize_per_frequency(fdbf(s));
  for (std::size_t i = 0; i < a.power.size(); ++i) EXPECT_NEAR(a.power.data()[i], b.power.data()[i], 1e-9);
}

TEST(Fdbf, NormalizedImageIsInvariantToACommonDelay) {
  const auto a = normalize_per_frequency(fdbf(transient_gather(800, 0.0)));
  const auto b = normalize_per_frequency(fdbf(transient_gather(800, 0.05)));
  for (std::size_t i = 0; i < a.power.size(); ++i) EXPECT_NEAR(a.power.data()[i], b.power.data()[i], 1e-9);
}

TEST(Fdbf, RandomPlaneWavesArePeakedWithinOneBin) {
  CounterRng rng(2024, 0);
  for (int trial = 0; trial < 25; ++trial) {
    const double f = 10.0 + static_cast<double>(rng.below(51));
    const double v = rng.uniform(150.0, 900.0);
    const auto im = fdbf(plane_wave(f, v, 48, 1.0, 400.0, 800));
    EXPECT_NEAR(peak_at(im, f), v, 2.25 + 1e-9) << "f " << f << " v " << v;
  }
}

TEST(Fdbf, CylindricalSteeringAlsoRecoversAPlaneWave) {
  const auto g = plane_wave(30.0, 400.0, 24, 2.0, 400.0, 800, 28.0);
  const auto im = fdbf(g, {}, SteeringMode::cylindrical());
  EXPECT_EQ(im.steering.label(), "cylindrical+sqrt_distance");
  EXPECT_NEAR(peak_at(im, 30.0), 400.0, 2.25);
  EXPECT_EQ(steering_from_string(im.steering.label()), SteeringMode::cylindrical());
}

TEST(Normalization, EveryColumnMaxIsExactlyOne) {
  const auto im = normalize_per_frequency(fdbf(transient_gather()));
  for (std::size_t c = 0; c < im.power.cols(); ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < im.power.rows(); ++r) m = std::max(m, im.power(r, c));
    EXPECT_EQ(m, 1.0) << "column " << c;
  }
}

TEST(Normalization, IsIdempotent) {
  const auto a = normalize_per_frequency(fdbf(transient_gather()));
  const auto b = normalize_per_frequency(a);
  EXPECT_EQ(a.power.values(), b.power.values());
}

TEST(Normalization, ColumnIsDividedByItsMaximum) {
  DispersionGrid grid = tiny_grid();
  grid.v_max_mps = 106.75;  // three velocities
  grid.f_max_hz = 5.0;      // one frequency
  const auto im = normalize_per_frequency(hand_image(grid, {2, 4, 8}));
  EXPECT_EQ(im.power.values(), (std::vector<double>{0.25, 0.5, 1.0}));
}

TEST(Normalization, ZeroColumnsStayZeroAndAreFlagged) {
  const auto im = normalize_per_frequency(hand_image(tiny_grid(), {0, 3, 0, 1}));
  EXPECT_EQ(im.degenerate_columns, (std::vector<std::uint8_t>{1, 0}));
  EXPECT_EQ(im.power(0, 0), 0.0);
  EXPECT_EQ(im.power(1, 0), 0.0);
}

TEST(OffsetStacking, HandBuiltTwoByTwoExample) {
  const auto a = hand_image(tiny_grid(), {1, 0, 0, 2});
  const auto b = hand_image(tiny_grid(), {2, 0, 0, 1});
  const auto s = stack_offsets({a, b});
  EXPECT_EQ(s.normalization, Normalization::per_frequency);
  EXPECT_EQ(s.power.values(), (std::vector<double>{1, 0, 0, 1}));
}

TEST(OffsetStacking, SingleImageReducesToPlainNormalization) {
  const auto raw = fdbf(transient_gather());
  const auto s = stack_offsets({raw});
  const auto n = normalize_per_frequency(normalize_absolute_max(raw));
  for (std::size_t i = 0; i < s.power.size(); ++i) EXPECT_NEAR(s.power.data()[i], n.power.data()[i], 1e-15);
}

TEST(OffsetStacking, CopiesOfOneImageMatchTheSingleImage) {
  const auto raw = fdbf(transient_gather());
  const auto one = stack_offsets({raw});
  const auto four = stack_offsets({raw, raw, raw, raw});
  for (std::size_t i = 0; i < one.power.size(); ++i) EXPECT_NEAR(one.power.data()[i], four.power.data()[i], 1e-9);
}

TEST(OffsetStacking, RejectsMismatchedGridsAndNormalizedInputs) {
  const auto a = hand_image(tiny_grid(), {1, 0, 0, 2});
  DispersionGrid other = tiny_grid();
  other.v_step_mps = 1.5;
  other.v_max_mps = 103.0;
  const auto b = hand_image(other, {1, 0, 0, 2});
  EXPECT_THROW(stack_offsets({a, b}), ValidationError);
  EXPECT_THROW(stack_offsets({}), ValidationError);
  EXPECT_THROW(stack_offsets({normalize_per_frequency(a)}), ValidationError);
}

TEST(PeakExtraction, SingleMaximumAndLowVelocityTieBreak) {
  DispersionGrid grid;
  grid.v_step_mps = 2.0;
  grid.f_max_hz = 6.0;
  DispersionImage im = hand_image(grid, {});
  const std::size_t k300 = 100, k500 = 200;
  ASSERT_DOUBLE_EQ(grid.velocity(k300), 300.0);
  ASSERT_DOUBLE_EQ(grid.velocity(k500), 500.0);
  im.power(k300, 0) = 1.0;
  im.power(k300, 1) = 1.0;
  im.power(k500, 1) = 1.0;
  const auto peaks = extract_peaks(im);
  ASSERT_EQ(peaks.size(), 2u);
  EXPECT_DOUBLE_EQ(peaks[0].velocity_mps, 300.0);
  EXPECT_DOUBLE_EQ(peaks[1].velocity_mps, 300.0);
}

TEST(ResolutionLimits, AliasingWavelengthIsTwiceTheSpacing) {
  EXPECT_DOUBLE_EQ(alias_limit(2.0).wavelength_m, 4.0);
  EXPECT_DOUBLE_EQ(alias_limit(1.0).wavelength_m, 2.0);
  EXPECT_DOUBLE_EQ(alias_limit(1.0).velocity_at(50.0), 100.0);
}

TEST(ResolutionLimits, NearFieldWavelengthIsTwiceTheArrayCentreDistance) {
  const auto g5 = elastodyn::linear_array(48, 1.0, 0.0, 5.0);
  const auto g20 = elastodyn::linear_array(48, 1.0, 0.0, 20.0);
  EXPECT_DOUBLE_EQ(nearfield_limit(g5.source_x_m, g5.receiver_x_m).wavelength_m, 57.0);
  EXPECT_DOUBLE_EQ(nearfield_limit(g20.source_x_m, g20.receiver_x_m).wavelength_m, 87.0);
  const auto degenerate = nearfield_limit(3.0, {3.0});
  EXPECT_EQ(degenerate.wavelength_m, 0.0);
  EXPECT_TRUE(degenerate.degenerate);
}

TEST(ImageComparison, ImageMatchesItself) {
  const auto a = normalize_per_frequency(fdbf(transient_gather()));
  EXPECT_EQ(compare_images(a, a), 1.0);
}

// With unit dynamic range the luminance term against zeros is at most
// c1 / (mu^2 + c1), so an image whose local means stay above 0.1 scores below 0.01.
TEST(ImageComparison, DenseImageAgainstZerosScoresNearZero) {
  auto a = hand_image(DispersionGrid{}, {});
  for (std::size_t r = 0; r < a.power.rows(); ++r)
    for (std::size_t c = 0; c < a.power.cols(); ++c)
      a.power(r, c) = 0.55 + 0.45 * std::sin(0.07 * static_cast<double>(r) + 0.3 * static_cast<double>(c));
  a.normalization = Normalization::per_frequency;
  auto z = a;
  for (auto& v : z.power.values()) v = 0.0;
  EXPECT_LT(compare_images(a, z), 0.01);
}
