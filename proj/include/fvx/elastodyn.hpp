#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fvx/common.hpp"
#include "fvx/geomodel.hpp"

namespace fvx::elastodyn {

enum class SourceKind { ricker, filtered_spike, linear_chirp };

std::string to_string(SourceKind k);
SourceKind source_kind_from_string(const std::string& s);

/// Force time function. Only the parameters of `kind` are used.
struct SourceFunction {
  SourceKind kind = SourceKind::ricker;
  double center_hz = 30.0;  // ricker
  double highcut_hz = 15.0; // filtered spike
  double f0_hz = 3.0;       // chirp start
  double f1_hz = 80.0;      // chirp end
  double sweep_s = 12.0;
  double taper_s = 0.25;    // chirp cosine taper at each end

  static SourceFunction ricker(double fc = 30.0);
  static SourceFunction filtered_spike(double highcut = 15.0);
  static SourceFunction chirp(double f0 = 3.0, double f1 = 80.0, double sweep = 12.0);

  /// Highest frequency carrying significant energy; drives the dispersion check.
  double max_frequency_hz() const;
  /// Onset delay of the main energy (Ricker centre, spike position, sweep start).
  double delay_s() const;
  std::string label() const;
};

void validate(const SourceFunction& src);

/// Source samples at t_n = n * dt for n < duration / dt, scaled to unit peak.
std::vector<double> make_source(const SourceFunction& src, double dt_s, double duration_s);

struct SimConfig {
  double dt_s = 5e-5;
  double duration_s = 2.0;
  double record_rate_hz = 400.0;
  double grid_pixel_m = 0.2;
  int pml_thickness_cells = 20;
  int spatial_order = 6;
  int temporal_order = 2;
  double pml_reflection = 1e-3;
  double pml_reference_hz = 30.0;  // CPML frequency-shift scale
  // Share of a layer's damping applied to derivatives along the other axis.
  double pml_multiaxial_ratio = 0.1;
  double min_points_per_wavelength = 8.0;
  // Steps between finiteness scans of the whole wavefield.
  int instability_check_interval = 500;
};

void validate(const SimConfig& cfg);

struct AcquisitionGeometry {
  std::vector<double> receiver_x_m;  // strictly increasing, model-local metres
  double source_x_m = 0.0;

  std::size_t n_receivers() const noexcept { return receiver_x_m.size(); }
  friend bool operator==(const AcquisitionGeometry&, const AcquisitionGeometry&) = default;
};

/// `count` receivers at `spacing` starting at `first_x`, source `offset` to the left.
AcquisitionGeometry linear_array(std::size_t count, double spacing_m, double first_x_m,
                                 double source_offset_m);

/// The training acquisition: 48 receivers at 1 m from 28 m, source 5 m off the end.
AcquisitionGeometry base_geometry();

void validate(const AcquisitionGeometry& g);

/// Vertical particle velocity, one row per receiver.
struct ShotGather {
  GridD traces;
  AcquisitionGeometry geometry;
  double rate_hz = 400.0;
  SourceFunction source;

  std::size_t n_receivers() const noexcept { return traces.rows(); }
  std::size_t n_samples() const noexcept { return traces.cols(); }
};

struct SimDiagnostics {
  double courant = 0.0;
  double points_per_wavelength = 0.0;
  std::size_t steps = 0;
  // Elastic energy of the non-absorbing region at each recorded sample.
  std::vector<double> interior_energy;
};

/// Velocity-stress staggered-grid P-SV solver, 6th order in space, leapfrog in
/// time, CPML on the sides and bottom, stress-image free surface on top.
/// The model must already be sampled at cfg.grid_pixel_m.
ShotGather simulate(const geomodel::VelocityModel& model, const AcquisitionGeometry& geometry,
                    const SourceFunction& source, const SimConfig& cfg,
                    SimDiagnostics* diagnostics = nullptr);

/// Like simulate() but with an explicit force series (one sample per step).
ShotGather simulate_with_force(const geomodel::VelocityModel& model,
                               const AcquisitionGeometry& geometry, const SourceFunction& source,
                               const std::vector<double>& force, const SimConfig& cfg,
                               SimDiagnostics* diagnostics = nullptr);

/// Sample-wise mean of gathers sharing geometry, rate and length.
ShotGather stack_shots(const std::vector<ShotGather>& gathers);

/// Courant number of the scheme for the given peak P velocity.
double courant_number(double vp_max, double dt_s, double h_m);

}  // namespace fvx::elastodyn
