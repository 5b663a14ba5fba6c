#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fvx/common.hpp"
#include "fvx/elastodyn.hpp"

namespace fvx::beamform {

/// Trial frequencies f_min..f_max inclusive; trial velocities are left bin edges
/// v_min, v_min + v_step, ... strictly below v_max.
struct DispersionGrid {
  double f_min_hz = 5.0;
  double f_max_hz = 80.0;
  double f_step_hz = 1.0;
  double v_min_mps = 100.0;
  double v_max_mps = 1000.0;
  double v_step_mps = 2.25;

  std::size_t n_frequencies() const;
  std::size_t n_velocities() const;
  double frequency(std::size_t i) const { return f_min_hz + f_step_hz * static_cast<double>(i); }
  double velocity(std::size_t k) const { return v_min_mps + v_step_mps * static_cast<double>(k); }

  friend bool operator==(const DispersionGrid&, const DispersionGrid&) = default;
};

void validate(const DispersionGrid& grid);

enum class Normalization : std::uint8_t { raw, per_frequency, absolute_max };
enum class SteeringKind : std::uint8_t { plane, cylindrical };
enum class Weighting : std::uint8_t { none, sqrt_distance };

std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& s);

struct SteeringMode {
  SteeringKind kind = SteeringKind::plane;
  Weighting weighting = Weighting::none;

  static SteeringMode plane() { return {SteeringKind::plane, Weighting::none}; }
  static SteeringMode cylindrical() { return {SteeringKind::cylindrical, Weighting::sqrt_distance}; }
  std::string label() const;
  friend bool operator==(const SteeringMode&, const SteeringMode&) = default;
};

SteeringMode steering_from_string(const std::string& s);

struct DispersionImage {
  GridD power;  // [velocity x frequency]
  DispersionGrid grid;
  Normalization normalization = Normalization::raw;
  // Set for frequency columns with no energy; such columns stay all zero.
  std::vector<std::uint8_t> degenerate_columns;
  bool degenerate = false;  // no energy anywhere

  elastodyn::AcquisitionGeometry geometry;
  std::string source_label;
  SteeringMode steering;
};

/// Frequency-domain beamformer power |e^H X|^2 = e^H (X X^H) e per trial (v, f).
DispersionImage fdbf(const elastodyn::ShotGather& gather, const DispersionGrid& grid = {},
                     const SteeringMode& mode = SteeringMode::plane());

/// Each column divided by its own maximum; zero columns are flagged.
DispersionImage normalize_per_frequency(const DispersionImage& image);

/// Whole image divided by its global maximum.
DispersionImage normalize_absolute_max(const DispersionImage& image);

/// Scale each image to unit global maximum, sum, then normalise per frequency.
DispersionImage stack_offsets(const std::vector<DispersionImage>& images);

struct Peak {
  double frequency_hz;
  double velocity_mps;
};

/// Velocity of the strongest bin in every non-degenerate column; ties go to the
/// lower velocity.
std::vector<Peak> extract_peaks(const DispersionImage& image);

/// Wavelength bound of a resolution limit; the curve is v(f) = f * wavelength.
struct WavelengthLimit {
  double wavelength_m = 0.0;
  bool degenerate = false;
  double velocity_at(double f_hz) const { return f_hz * wavelength_m; }
};

/// Spatial aliasing: wavelengths shorter than twice the spacing.
WavelengthLimit alias_limit(double receiver_spacing_m);

/// Near-field: wavelengths longer than twice the source-to-array-centre distance.
WavelengthLimit nearfield_limit(double source_x_m, const std::vector<double>& receiver_x_m);

/// MSSIM of two images on the same grid with unit dynamic range.
double compare_images(const DispersionImage& a, const DispersionImage& b);

}  // namespace fvx::beamform
