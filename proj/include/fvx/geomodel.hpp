#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fvx/common.hpp"

namespace fvx::geomodel {

enum class InterfaceClass : std::uint8_t { highly = 0, slightly = 1, linear = 2 };

std::string to_string(InterfaceClass c);
InterfaceClass interface_class_from_string(const std::string& s);

enum class Material : std::uint8_t { soil = 0, rock = 1 };

/// Statistical recipe for soil over undulating bedrock. Lengths in metres,
/// velocities in m/s, spatial frequencies in 1/m.
struct ModelSpec {
  double width_m = 104.0;
  double depth_m = 24.0;
  double pixel_m = 1.0;

  Interval soil_factor_range{0.9, 1.1};
  Interval interface_depth_range_m{5.0, 20.0};
  Interval bedrock_vs_range_mps{360.0, 760.0};

  // Fractions of highly, slightly and linear interfaces.
  std::array<double, 3> class_mix{0.30, 0.60, 0.10};
  Interval band_highly{1.0 / 60.0, 1.0 / 5.0};
  Interval band_slightly{1.0 / 60.0, 1.0 / 10.0};
  // Total peak-to-peak relief of the three-sinusoid interface.
  Interval relief_highly_m{1.0, 4.0};
  Interval relief_slightly_m{0.5, 2.0};

  Interval perturb_corr_v_m{1.0, 2.0};
  Interval perturb_corr_h_m{4.0, 6.0};
  double perturb_cov = 0.05;

  // Quarter-power confining-stress law for dense granular soil.
  double stress_coeff_mps = 240.0;
  double stress_exponent = 0.25;
  double k0 = 0.5;
  double gravity = 9.81;
  double p_atm_pa = 101325.0;
  double vs_floor_mps = 200.0;

  double poisson_soil = 0.33;
  double poisson_rock = 0.20;
  double rho_soil = 2000.0;
  double rho_rock = 2100.0;

  std::uint64_t seed = 0;
};

/// Throws ValidationError naming the first offending field.
void validate(const ModelSpec& spec);

/// Gridded model. Grids are (row = depth, col = x), one value per pixel centre.
struct VelocityModel {
  double pixel_m = 1.0;
  double x_origin_m = 0.0;  // left edge in the coordinates of the generated parent
  GridD vs;
  GridD vp;
  GridD rho;
  Grid2D<std::uint8_t> material;
  std::vector<double> interface_depth;  // per column, metres below surface
  InterfaceClass interface_class = InterfaceClass::linear;

  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  double soil_factor = 1.0;
  double bedrock_vs = 0.0;
  double mean_interface_depth = 0.0;
  std::array<double, 3> undulation_freq{};  // 1/m, zero for linear interfaces
  std::array<double, 3> undulation_amp{};   // m
  std::array<double, 3> undulation_phase{};
  double corr_v_m = 0.0;
  double corr_h_m = 0.0;

  std::size_t rows() const noexcept { return vs.rows(); }
  std::size_t cols() const noexcept { return vs.cols(); }
  double width_m() const noexcept { return static_cast<double>(cols()) * pixel_m; }
  double depth_m() const noexcept { return static_cast<double>(rows()) * pixel_m; }
};

/// Horizontal window in model-local metres, spanning the top `depth_m`.
struct CropWindow {
  double x_start_m = 28.0;
  double x_end_m = 76.0;
  double depth_m = 24.0;
};

/// The 48 m window centred in a model of the given width.
CropWindow centered_window(double model_width_m, double window_width_m = 48.0,
                           double depth_m = 24.0);

/// vp/vs for an isotropic solid with Poisson ratio nu.
double vp_over_vs(double poisson);

/// Unperturbed soil velocity at depth z (truncated at the floor).
double soil_vs(const ModelSpec& spec, double depth_m, double soil_factor);

/// Stratified assignment: every full cycle of the class table reproduces
/// class_mix exactly, and prefixes stay within one model of it per class.
InterfaceClass interface_class_for(const ModelSpec& spec, std::uint64_t index);

/// Deterministic in (spec.seed, index) alone.
VelocityModel generate_model(const ModelSpec& spec, std::uint64_t index);

VelocityModel crop(const VelocityModel& model, const CropWindow& window);

/// Bilinear resampling of vs/vp/rho between pixel centres; edges clamp.
VelocityModel refine(const VelocityModel& model, double target_pixel_m);

}  // namespace fvx::geomodel
