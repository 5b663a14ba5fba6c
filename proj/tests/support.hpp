#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "fvx/elastodyn.hpp"
#include "fvx/geomodel.hpp"

namespace fvx::testing {

/// Uniform half-space sampled at `pixel_m`, already on the simulation grid.
inline geomodel::VelocityModel homogeneous_model(double width_m, double depth_m, double pixel_m, double vp,
                                                 double vs, double rho) {
  const auto rows = static_cast<std::size_t>(std::llround(depth_m / pixel_m));
  const auto cols = static_cast<std::size_t>(std::llround(width_m / pixel_m));
  geomodel::VelocityModel m;
  m.pixel_m = pixel_m;
  m.vs = GridD(rows, cols, vs);
  m.vp = GridD(rows, cols, vp);
  m.rho = GridD(rows, cols, rho);
  m.material = Grid2D<std::uint8_t>(rows, cols, 0);
  m.interface_depth.assign(cols, depth_m);
  return m;
}

/// Rayleigh phase velocity of a half-space by bisection on the characteristic
/// equation (2 - x^2)^2 = 4 sqrt(1 - x^2 (vs/vp)^2) sqrt(1 - x^2), x = c / vs.
inline double rayleigh_velocity(double vs, double poisson) {
  const double vp_vs = std::sqrt(2.0 * (1.0 - poisson) / (1.0 - 2.0 * poisson));
  const double q = 1.0 / (vp_vs * vp_vs);
  auto f = [&](double x) {
    const double x2 = x * x;
    return (2.0 - x2) * (2.0 - x2) - 4.0 * std::sqrt(1.0 - x2 * q) * std::sqrt(1.0 - x2);
  };
  double lo = 0.5, hi = 0.999999;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((f(lo) > 0.0) == (f(mid) > 0.0))
      lo = mid;
    else
      hi = mid;
  }
  return vs * 0.5 * (lo + hi);
}

/// Noiseless monochromatic plane wave travelling in +x: cos(2 pi f (t - x / v)).
inline elastodyn::ShotGather plane_wave(double f_hz, double v_mps, std::size_t receivers, double spacing_m,
                                        double rate_hz, std::size_t samples, double first_x_m = 0.0) {
  elastodyn::ShotGather g;
  g.geometry = elastodyn::linear_array(receivers, spacing_m, first_x_m, 5.0);
  g.rate_hz = rate_hz;
  g.traces = GridD(receivers, samples);
  for (std::size_t r = 0; r < receivers; ++r)
    for (std::size_t k = 0; k < samples; ++k) {
      const double t = static_cast<double>(k) / rate_hz;
      g.traces(r, k) = std::cos(2.0 * std::numbers::pi * f_hz * (t - g.geometry.receiver_x_m[r] / v_mps));
    }
  return g;
}

/// |DFT| at one frequency, computed directly.
inline double dft_amplitude(const std::vector<double>& x, double dt, double f_hz) {
  std::complex<double> acc = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n)
    acc += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * f_hz * static_cast<double>(n) * dt);
  return std::abs(acc);
}

}  // namespace fvx::testing
