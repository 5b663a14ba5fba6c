#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fvx/beamform.hpp"
#include "fvx/elastodyn.hpp"
#include "fvx/geomodel.hpp"
#include "fvx/neuralvision.hpp"

namespace fvx::orchestry {

/// Acquisition used for training data and as the reference of every variant.
struct AcquisitionConfig {
  std::size_t receivers = 48;
  double spacing_m = 1.0;
  double source_offset_m = 5.0;
  std::string source = "ricker30";
  double chirp_duration_s = 13.0;  // record length for swept sources
};

struct ExperimentConfig {
  std::size_t dataset_size = 100;
  std::size_t test_subset = 0;  // 0 evaluates every test model
  std::vector<std::string> variants;
  std::string output_dir = "fvx-run";
  std::size_t workers = 1;
};

struct PipelineConfig {
  geomodel::ModelSpec model;
  elastodyn::SimConfig sim;
  AcquisitionConfig acquisition;
  beamform::DispersionGrid grid;
  beamform::SteeringMode steering = beamform::SteeringMode::plane();
  std::string architecture = "frequency_velocity";
  neuralvision::TrainConfig training;
  ExperimentConfig experiment;
};

/// Unknown keys and out-of-range values raise ValidationError naming the key.
PipelineConfig config_from_toml(std::string_view text, const std::string& origin = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);
void validate(const PipelineConfig& cfg);
nlohmann::json to_json(const PipelineConfig& cfg);

/// FVX_WORKERS, when set, overrides the configured worker count.
std::size_t worker_count(const PipelineConfig& cfg);

/// "ricker30", "spike15", "chirp3-80" (12 s sweep) and the like.
elastodyn::SourceFunction parse_source(const std::string& name);

neuralvision::Architecture architecture_by_name(const std::string& name);

}  // namespace fvx::orchestry
