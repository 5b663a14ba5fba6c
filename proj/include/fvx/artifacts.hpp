#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fvx/beamform.hpp"
#include "fvx/elastodyn.hpp"
#include "fvx/fvbin.hpp"
#include "fvx/geomodel.hpp"
#include "fvx/neuralvision.hpp"

namespace fvx::orchestry {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

fvbin::File model_to_fvbin(const geomodel::VelocityModel& model);
geomodel::VelocityModel model_from_fvbin(const fvbin::File& file);

fvbin::File gather_to_fvbin(const elastodyn::ShotGather& gather);
elastodyn::ShotGather gather_from_fvbin(const fvbin::File& file);

fvbin::File image_to_fvbin(const beamform::DispersionImage& image);
beamform::DispersionImage image_from_fvbin(const fvbin::File& file);

fvbin::File prediction_to_fvbin(const neuralvision::VsImagePrediction& prediction);
neuralvision::VsImagePrediction prediction_from_fvbin(const fvbin::File& file);

/// Kind tag stored in the metadata ("model", "gather", "image", "prediction", "network").
std::string artifact_kind(const fvbin::File& file);

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  std::string sha256;
  std::string kind;
  nlohmann::json info = nlohmann::json::object();
};

struct QuarantineEntry {
  std::string item;
  std::string stage;
  std::string reason;
  int exit_code = 0;
};

/// manifest.json of one output directory.
struct Manifest {
  std::string stage;
  nlohmann::json config = nlohmann::json::object();
  std::vector<ManifestEntry> artifacts;
  std::vector<QuarantineEntry> quarantined;
};

void write_manifest(const std::filesystem::path& dir, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& dir);
/// Re-hashes every listed artifact; DataError names the first mismatch.
void verify_manifest(const std::filesystem::path& dir, const Manifest& manifest);

/// Writes the FVBIN file and returns its manifest entry.
ManifestEntry write_artifact(const std::filesystem::path& dir, const std::string& name,
                             const fvbin::File& file, nlohmann::json info = nlohmann::json::object());

/// Shortest round-trip decimal form, locale independent.
std::string format_number(double v);
std::string format_number(float v);

/// Numeric CSV, one grid row per line, no header.
std::string grid_to_csv(const GridD& grid);

/// One column per receiver (header r0..rN-1), one row per time sample, float precision.
std::string gather_to_csv(const elastodyn::ShotGather& gather);

/// Rectangular numeric CSV with an optional header row, one column per receiver.
elastodyn::ShotGather parse_gather_csv(std::string_view text, const elastodyn::AcquisitionGeometry& geometry,
                                       double rate_hz, const std::string& origin = "<csv>");
elastodyn::ShotGather import_csv(const std::filesystem::path& path,
                                 const elastodyn::AcquisitionGeometry& geometry, double rate_hz);
/// Imports each file and stacks them in the time domain.
elastodyn::ShotGather import_csv(const std::vector<std::filesystem::path>& paths,
                                 const elastodyn::AcquisitionGeometry& geometry, double rate_hz);

using Rgb = std::array<std::uint8_t, 3>;

/// Nine-knot piecewise-linear approximation of the viridis map, t in [0, 1].
Rgb colormap(double t);

/// 8-bit RGB PNG, one pixel per grid cell scaled by `scale`; values clamp to [lo, hi].
void write_png(const std::filesystem::path& path, const GridD& grid, double lo, double hi,
               std::size_t scale = 4);

}  // namespace fvx::orchestry
