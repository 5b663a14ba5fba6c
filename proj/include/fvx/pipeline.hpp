#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "fvx/artifacts.hpp"
#include "fvx/config.hpp"

namespace fvx::orchestry {

/// One acquisition configuration of the robustness matrix.
struct Variant {
  std::string name = "base";
  std::size_t receivers = 48;
  double spacing_m = 1.0;
  std::vector<double> source_offsets_m{5.0};  // two or more are stacked in the dispersion domain
  std::string source = "ricker30";

  friend bool operator==(const Variant&, const Variant&) = default;
};

/// "base", "rec24@2", "offset20", "stack5+20", "spike15", "chirp3-80".
Variant parse_variant(const std::string& name, const AcquisitionConfig& base = {});
std::vector<Variant> parse_variants(const std::vector<std::string>& names, const AcquisitionConfig& base = {});

/// The eleven frequency-velocity rows of the robustness table.
std::vector<std::string> robustness_variant_names();

Variant base_variant(const AcquisitionConfig& acq);

/// Receivers from the left edge of the target window, source `offset` to the left.
elastodyn::AcquisitionGeometry variant_geometry(const Variant& v, double first_receiver_x_m, double offset_m);

double record_duration(const PipelineConfig& cfg, const elastodyn::SourceFunction& src);

/// The model as the solver sees it: resampled to the simulation grid.
geomodel::VelocityModel simulation_model(const PipelineConfig& cfg, const geomodel::VelocityModel& model);

/// Vs under the centred 48 m window; the network target in m/s.
GridD target_vs(const geomodel::VelocityModel& model);

elastodyn::ShotGather simulate_shot(const PipelineConfig& cfg, const geomodel::VelocityModel& model,
                                    const Variant& variant, double offset_m);

/// Normalised dispersion image for a variant: one shot per offset, stacked when several.
beamform::DispersionImage variant_image(const PipelineConfig& cfg, const geomodel::VelocityModel& model,
                                        const Variant& variant);

/// Images from gathers of the same model at different offsets.
beamform::DispersionImage image_from_gathers(const PipelineConfig& cfg,
                                             const std::vector<elastodyn::ShotGather>& gathers);

/// Frequency-velocity network input: [velocity x frequency] power.
std::vector<float> network_input(const beamform::DispersionImage& image);
/// Time-distance network input: traces divided by the gather's peak amplitude.
std::vector<float> network_input(const elastodyn::ShotGather& gather);

/// Subset of `candidates` whose class counts follow the configured mix by
/// largest remainder; earliest indices of each class are taken first.
std::vector<std::uint64_t> stratified_subset(const geomodel::ModelSpec& spec,
                                             const std::vector<std::uint64_t>& candidates, std::size_t count);

/// Runs fn(i) for i in [0, n) on `workers` threads. Each index runs exactly
/// once; an exception from one index is stored in `errors[i]` and does not
/// stop the others. Results must be written to per-index slots.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn,
                  std::vector<std::exception_ptr>* errors = nullptr);

/// Classifies an exception into a quarantine record.
QuarantineEntry quarantine_record(const std::string& item, const std::string& stage, std::exception_ptr e);

struct PairSet {
  std::vector<std::uint64_t> indices;
  std::vector<std::vector<float>> inputs;
  std::vector<GridD> targets_mps;
  std::vector<std::string> classes;
  std::vector<QuarantineEntry> quarantined;
};

/// Generates, simulates and transforms models [first, first + count) for one variant.
PairSet build_pairs(const PipelineConfig& cfg, std::uint64_t first, std::size_t count, const Variant& variant,
                    const neuralvision::Architecture& arch, std::size_t workers);

struct SplitData {
  neuralvision::Dataset train;
  neuralvision::Dataset validation;
  neuralvision::Dataset test;
  std::vector<std::uint64_t> train_indices, validation_indices, test_indices;
  double vs_norm_max = 0.0;
};

/// Contiguous split by position; targets divided by the training-set maximum Vs.
SplitData split_pairs(const PairSet& pairs, const neuralvision::Architecture& arch,
                      const std::array<double, 3>& fractions);

struct ReportRow {
  std::string model_id;
  std::string variant;
  std::string interface_class;
  double mape = 0.0;
  double mssim = 0.0;
};

struct VariantAggregate {
  std::string variant;
  double mean_mape = 0.0;
  double mean_mssim = 0.0;
  std::size_t count = 0;
  std::size_t discarded = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::vector<VariantAggregate> aggregates;
  std::vector<QuarantineEntry> quarantined;
};

/// Per-variant arithmetic means of the rows, in order of first appearance.
std::vector<VariantAggregate> aggregate(const std::vector<ReportRow>& rows,
                                        const std::vector<QuarantineEntry>& quarantined,
                                        const std::vector<std::string>& variant_order = {});

/// Evaluates the network on every (test model, variant). Failures of one model
/// are quarantined and counted; they never abort the run.
ExperimentReport run_experiment(const PipelineConfig& cfg, const neuralvision::Network<float>& net,
                                const std::vector<std::uint64_t>& test_indices,
                                const std::vector<Variant>& variants, double dynamic_range_mps,
                                std::size_t workers);

std::string report_csv(const ExperimentReport& report);
std::string summary_csv(const ExperimentReport& report);
std::string summary_table(const ExperimentReport& report);

struct ProfileSet {
  std::vector<double> depth_m;                // pixel-centre depths
  std::vector<std::vector<double>> profiles;  // one per column, top to bottom
  std::vector<double> median;                 // exp(mean ln Vs) per depth
};

ProfileSet slice_profiles(const GridD& vs_mps, double pixel_m = 1.0);

struct SearchSpace {
  std::vector<double> learning_rates{5e-4};
  std::vector<std::size_t> batch_sizes{16};
  std::vector<std::size_t> epochs{40};
  std::vector<neuralvision::Optimizer> optimizers{neuralvision::Optimizer::adam};
  std::vector<neuralvision::Loss> losses{neuralvision::Loss::mae};
};

struct SearchResult {
  neuralvision::TrainConfig config;
  double best_validation_loss = 0.0;
  std::size_t best_epoch = 0;
};

/// Trains one fresh network per combination; results sorted by validation loss.
std::vector<SearchResult> grid_search(const neuralvision::Architecture& arch, const neuralvision::Dataset& train,
                                      const neuralvision::Dataset& validation,
                                      const neuralvision::TrainConfig& base, const SearchSpace& space);

std::string model_id(std::uint64_t index);

}  // namespace fvx::orchestry
