#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fvx/elastodyn.hpp"
#include "support.hpp"

using namespace fvx;
using namespace fvx::elastodyn;
using fvx::testing::dft_amplitude;
using fvx::testing::homogeneous_model;

namespace {

SimConfig short_run(double duration_s) {
  SimConfig cfg;
  cfg.duration_s = duration_s;
  return cfg;
}

}  // namespace

TEST(SourceFunctions, RickerSpectrumPeaksAtItsCentreFrequency) {
  const double dt = 5e-5;
  const auto s = make_source(SourceFunction::ricker(30.0), dt, 2.0);
  double best_f = 0.0, best = -1.0;
  for (double f = 0.5; f <= 100.0; f += 0.5) {
    const double a = dft_amplitude(s, dt, f);
    if (a > best) {
      best = a;
      best_f = f;
    }
  }
  EXPECT_NEAR(best_f, 30.0, 0.5);
}

TEST(SourceFunctions, ChirpInstantaneousFrequencyFollowsTheLinearSweep) {
  const double dt = 1e-4;
  const auto s = make_source(SourceFunction::chirp(3.0, 80.0, 12.0), dt, 13.0);
  const auto begin = static_cast<std::size_t>(std::llround(5.9 / dt));
  const auto end = static_cast<std::size_t>(std::llround(6.1 / dt));
  int crossings = 0;
  for (std::size_t i = begin; i < end; ++i)
    if ((s[i] < 0.0) != (s[i + 1] < 0.0)) ++crossings;
  const double f = crossings / (2.0 * 0.2);
  EXPECT_NEAR(f, 3.0 + (80.0 - 3.0) * 6.0 / 12.0, 1.0);
}

TEST(SourceFunctions, FilteredSpikeAttenuatesAboveItsCutoff) {
  const double dt = 5e-5;
  const auto s = make_source(SourceFunction::filtered_spike(15.0), dt, 2.0);
  EXPECT_LE(dft_amplitude(s, dt, 30.0), 0.1 * dft_amplitude(s, dt, 5.0));
}

TEST(SourceFunctions, SeriesAreScaledToUnitPeak) {
  for (const auto& src : {SourceFunction::ricker(), SourceFunction::filtered_spike(), SourceFunction::chirp()}) {
    const auto s = make_source(src, 1e-4, 13.0);
    double m = 0.0;
    for (double v : s) m = std::max(m, std::abs(v));
    EXPECT_NEAR(m, 1.0, 1e-12) << src.label();
  }
}

TEST(SourceFunctions, NonpositiveFrequencyIsRejected) {
  EXPECT_THROW(make_source(SourceFunction::ricker(0.0), 1e-4, 1.0), ValidationError);
  EXPECT_THROW(make_source(SourceFunction::filtered_spike(-1.0), 1e-4, 1.0), ValidationError);
  EXPECT_THROW(make_source(SourceFunction::chirp(3.0, 0.0), 1e-4, 1.0), ValidationError);
}

TEST(Simulation, ZeroForceGivesAnAllZeroGather) {
  const auto m = homogeneous_model(20.0, 6.0, 0.2, 600.0, 300.0, 2000.0);
  const auto cfg = short_run(0.1);
  const std::vector<double> force(static_cast<std::size_t>(0.1 / cfg.dt_s), 0.0);
  const auto g = simulate_with_force(m, linear_array(4, 1.0, 8.0, 5.0), SourceFunction::ricker(), force, cfg);
  EXPECT_EQ(g.n_samples(), 40u);
  for (double v : g.traces.values()) EXPECT_EQ(v, 0.0);
}

TEST(Simulation, PArrivalMatchesStraightRayTravelTime) {
  // vp = 600 m/s, receiver 20 m from the source. The shear speed is chosen low
  // enough that the surface wave arrives well after the P pulse.
  const auto m = homogeneous_model(60.0, 20.0, 0.2, 600.0, 250.0, 2000.0);
  AcquisitionGeometry geo;
  geo.source_x_m = 20.0;
  geo.receiver_x_m = {40.0};
  const auto src = SourceFunction::ricker(30.0);
  const auto g = simulate(m, geo, src, short_run(0.2));
  const double expected = 20.0 / 600.0 + src.delay_s();
  // The P pulse is the strongest motion before the surface-wave main lobe can start.
  const double surface_start = 20.0 / 250.0 + src.delay_s() - 1.2 / src.center_hz;
  std::size_t best = 0;
  for (std::size_t k = 0; static_cast<double>(k) / g.rate_hz < surface_start; ++k)
    if (std::abs(g.traces(0, k)) > std::abs(g.traces(0, best))) best = k;
  EXPECT_NEAR(static_cast<double>(best), expected * g.rate_hz, 2.0);
}

TEST(Simulation, BaseAcquisitionRecordsFortyEightBy800) {
  const auto m = homogeneous_model(64.0, 8.0, 0.2, 500.0, 250.0, 2000.0);
  const auto g = simulate(m, linear_array(48, 1.0, 8.0, 5.0), SourceFunction::ricker(), SimConfig{});
  EXPECT_EQ(g.n_receivers(), 48u);
  EXPECT_EQ(g.n_samples(), 800u);
  for (double v : g.traces.values()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Simulation, CflViolationReportsTheCourantNumber) {
  const auto m = homogeneous_model(20.0, 6.0, 0.2, 6000.0, 3000.0, 2000.0);
  try {
    simulate(m, linear_array(4, 1.0, 8.0, 5.0), SourceFunction::ricker(), short_run(0.05));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("Courant number"), std::string::npos) << e.what();
  }
}

TEST(Simulation, UnderResolvedGridReportsPointsPerWavelength) {
  const auto m = homogeneous_model(20.0, 6.0, 0.2, 100.0, 50.0, 2000.0);
  try {
    simulate(m, linear_array(4, 1.0, 8.0, 5.0), SourceFunction::ricker(), short_run(0.05));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("points per minimum wavelength"), std::string::npos) << e.what();
  }
}

TEST(Simulation, NonFiniteWavefieldNamesTheStep) {
  const auto m = homogeneous_model(20.0, 6.0, 0.2, 600.0, 300.0, 2000.0);
  auto cfg = short_run(0.05);
  std::vector<double> force(1000, 0.0);
  force[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    simulate_with_force(m, linear_array(4, 1.0, 8.0, 5.0), SourceFunction::ricker(), force, cfg);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("at step"), std::string::npos) << e.what();
  }
}

TEST(Simulation, RejectsUnrefinedModelsAndOutsideReceivers) {
  const auto m = homogeneous_model(20.0, 6.0, 1.0, 600.0, 300.0, 2000.0);
  EXPECT_THROW(simulate(m, linear_array(4, 1.0, 8.0, 5.0), SourceFunction::ricker(), short_run(0.05)),
               ValidationError);
  const auto f = homogeneous_model(20.0, 6.0, 0.2, 600.0, 300.0, 2000.0);
  EXPECT_THROW(simulate(f, linear_array(4, 1.0, 18.0, 5.0), SourceFunction::ricker(), short_run(0.05)),
               ValidationError);
  SimConfig bad;
  bad.record_rate_hz = 333.0;
  EXPECT_THROW(validate(bad), ValidationError);
}

TEST(Simulation, IdenticalInputsGiveBitIdenticalGathers) {
  const auto m = homogeneous_model(30.0, 8.0, 0.2, 600.0, 300.0, 2000.0);
  const auto geo = linear_array(10, 1.0, 10.0, 5.0);
  const auto a = simulate(m, geo, SourceFunction::ricker(), short_run(0.15));
  const auto b = simulate(m, geo, SourceFunction::ricker(), short_run(0.15));
  EXPECT_EQ(a.traces.values(), b.traces.values());
}

TEST(Simulation, RecordedSamplesAreTheSolverStateAtRecordTimes) {
  const auto m = homogeneous_model(30.0, 8.0, 0.2, 600.0, 300.0, 2000.0);
  const auto geo = linear_array(6, 1.0, 10.0, 5.0);
  auto slow = short_run(0.15);
  auto fast = slow;
  fast.record_rate_hz = 4000.0;
  const auto a = simulate(m, geo, SourceFunction::ricker(), slow);
  const auto b = simulate(m, geo, SourceFunction::ricker(), fast);
  ASSERT_EQ(b.n_samples(), 10 * a.n_samples());
  for (std::size_t r = 0; r < a.n_receivers(); ++r)
    for (std::size_t k = 0; k < a.n_samples(); ++k) EXPECT_EQ(a.traces(r, k), b.traces(r, 10 * k));
}

TEST(Simulation, SwappingSourceAndReceiverChangesTheTraceByLessThanOnePercent) {
  auto m = homogeneous_model(40.0, 12.0, 0.2, 700.0, 300.0, 2000.0);
  for (std::size_t r = 30; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) {
      m.vs(r, c) = 450.0;
      m.vp(r, c) = 900.0;
      m.rho(r, c) = 2100.0;
    }
  AcquisitionGeometry ab, ba;
  ab.source_x_m = 12.0;
  ab.receiver_x_m = {24.0};
  ba.source_x_m = 24.0;
  ba.receiver_x_m = {12.0};
  const auto g1 = simulate(m, ab, SourceFunction::ricker(), short_run(0.3));
  const auto g2 = simulate(m, ba, SourceFunction::ricker(), short_run(0.3));
  double diff = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < g1.n_samples(); ++k) {
    diff += std::pow(g1.traces(0, k) - g2.traces(0, k), 2);
    ref += std::pow(g1.traces(0, k), 2);
  }
  EXPECT_LT(std::sqrt(diff / ref), 0.01);
}

TEST(Simulation, InteriorEnergyDoesNotGrowAfterTheSourceStops) {
  const auto m = homogeneous_model(40.0, 12.0, 0.2, 600.0, 300.0, 2000.0);
  SimDiagnostics d;
  const auto src = SourceFunction::ricker();
  simulate(m, linear_array(10, 1.0, 15.0, 5.0), src, short_run(0.4), &d);
  const double peak = *std::max_element(d.interior_energy.begin(), d.interior_energy.end());
  ASSERT_GT(peak, 0.0);
  const auto quiet = static_cast<std::size_t>(std::ceil(2.0 * src.delay_s() * 400.0));
  for (std::size_t k = quiet; k + 1 < d.interior_energy.size(); ++k)
    EXPECT_LE(d.interior_energy[k + 1], d.interior_energy[k] + 1e-9 * peak) << "sample " << k;
}

// Soil over rock with the interface running through both side layers: a
// waveguide that plain CPML amplifies without bound.
TEST(Simulation, LayeredModelStaysBoundedInTheAbsorbingLayers) {
  auto m = homogeneous_model(30.0, 10.0, 0.2, 500.0, 250.0, 1900.0);
  for (std::size_t j = m.rows() / 2; j < m.rows(); ++j) {
    for (std::size_t i = 0; i < m.cols(); ++i) {
      m.vs(j, i) = 600.0;
      m.vp(j, i) = 980.0;
      m.rho(j, i) = 2300.0;
    }
  }
  const auto geometry = linear_array(10, 1.0, 10.0, 3.0);
  const auto src = SourceFunction::ricker();
  const auto quiet = static_cast<std::size_t>(std::ceil(2.0 * src.delay_s() * 400.0));

  SimDiagnostics d;
  simulate(m, geometry, src, short_run(2.0), &d);
  const double peak = *std::max_element(d.interior_energy.begin(), d.interior_energy.end());
  ASSERT_GT(peak, 0.0);
  for (std::size_t k = quiet; k + 1 < d.interior_energy.size(); ++k)
    ASSERT_LE(d.interior_energy[k + 1], d.interior_energy[k] + 1e-9 * peak) << "sample " << k;
  EXPECT_LT(d.interior_energy.back(), 1e-6 * peak);

  auto uniaxial = short_run(2.0);
  uniaxial.pml_multiaxial_ratio = 0.0;
  SimDiagnostics u;
  simulate(m, geometry, src, uniaxial, &u);
  EXPECT_GT(u.interior_energy.back(), peak);
}

TEST(ShotStacking, SingleGatherIsReturnedUnchanged) {
  const auto g = fvx::testing::plane_wave(20.0, 300.0, 4, 1.0, 400.0, 50);
  EXPECT_EQ(stack_shots({g}).traces.values(), g.traces.values());
}

TEST(ShotStacking, IdenticalGathersStackToThemselves) {
  const auto g = fvx::testing::plane_wave(20.0, 300.0, 4, 1.0, 400.0, 50);
  const auto s = stack_shots({g, g, g, g, g});
  for (std::size_t i = 0; i < g.traces.size(); ++i) EXPECT_NEAR(s.traces.data()[i], g.traces.data()[i], 1e-15);
}

TEST(ShotStacking, OppositeGathersCancel) {
  const auto g = fvx::testing::plane_wave(20.0, 300.0, 4, 1.0, 400.0, 50);
  auto n = g;
  for (auto& v : n.traces.values()) v = -v;
  const auto s = stack_shots({g, n});
  for (double v : s.traces.values()) EXPECT_EQ(v, 0.0);
}

TEST(ShotStacking, MismatchedGathersAreRejected) {
  const auto g = fvx::testing::plane_wave(20.0, 300.0, 4, 1.0, 400.0, 50);
  auto rate = g;
  rate.rate_hz = 200.0;
  auto geo = g;
  geo.geometry.source_x_m += 1.0;
  const auto len = fvx::testing::plane_wave(20.0, 300.0, 4, 1.0, 400.0, 60);
  EXPECT_THROW(stack_shots({g, rate}), ValidationError);
  EXPECT_THROW(stack_shots({g, geo}), ValidationError);
  EXPECT_THROW(stack_shots({g, len}), ValidationError);
  EXPECT_THROW(stack_shots({}), ValidationError);
}

TEST(Geometry, BaseGeometrySpansTheTrainingWindow) {
  const auto g = base_geometry();
  ASSERT_EQ(g.n_receivers(), 48u);
  EXPECT_DOUBLE_EQ(g.receiver_x_m.front(), 28.0);
  EXPECT_DOUBLE_EQ(g.receiver_x_m.back(), 75.0);
  EXPECT_DOUBLE_EQ(g.source_x_m, 23.0);
}
