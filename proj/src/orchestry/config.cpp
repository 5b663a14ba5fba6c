#include "fvx/config.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "fvx/pipeline.hpp"
#include "fvx/toml.hpp"

namespace fvx::orchestry {

namespace {

using json = nlohmann::json;

// Reads typed keys from one table and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      if (!root[name_].is_object()) throw ValidationError(name_, "must be a table");
      table_ = root[name_];
    }
  }

  void number(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "must be a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void integer(const char* key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) fail(key, "must be a nonnegative integer");
      out = static_cast<Int>(v->get<long long>());
    }
  }

  void text(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "must be a string");
      out = v->get<std::string>();
    }
  }

  void interval(const char* key, Interval& out) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
        fail(key, "must be a two-element numeric array [lo, hi]");
      out = {(*v)[0].get<double>(), (*v)[1].get<double>()};
    }
  }

  void triple(const char* key, std::array<double, 3>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != 3) fail(key, "must be a three-element numeric array");
      for (std::size_t i = 0; i < 3; ++i) {
        if (!(*v)[i].is_number()) fail(key, "must be a three-element numeric array");
        out[i] = (*v)[i].get<double>();
      }
    }
  }

  void strings(const char* key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "must be an array of strings");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) fail(key, "must be an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }

  void finish() const {
    for (const auto& [k, v] : table_.items())
      if (!used_.count(k)) throw ValidationError(name_ + "." + k, "unknown key");
  }

 private:
  const json* find(const char* key) {
    used_.insert(key);
    return table_.contains(key) ? &table_[key] : nullptr;
  }
  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ValidationError(name_ + "." + key, what);
  }

  std::string name_;
  json table_ = json::object();
  std::set<std::string> used_;
};

json interval_json(const Interval& iv) { return {iv.lo, iv.hi}; }

}  // namespace

elastodyn::SourceFunction parse_source(const std::string& name) {
  static const std::regex ricker(R"(ricker([0-9]+(?:\.[0-9]+)?))");
  static const std::regex spike(R"(spike([0-9]+(?:\.[0-9]+)?))");
  static const std::regex chirp(R"(chirp([0-9]+(?:\.[0-9]+)?)-([0-9]+(?:\.[0-9]+)?)(?:@([0-9]+(?:\.[0-9]+)?))?)");
  std::smatch m;
  elastodyn::SourceFunction src;
  if (std::regex_match(name, m, ricker)) {
    src = elastodyn::SourceFunction::ricker(std::stod(m[1]));
  } else if (std::regex_match(name, m, spike)) {
    src = elastodyn::SourceFunction::filtered_spike(std::stod(m[1]));
  } else if (std::regex_match(name, m, chirp)) {
    src = elastodyn::SourceFunction::chirp(std::stod(m[1]), std::stod(m[2]), m[3].matched ? std::stod(m[3]) : 12.0);
  } else {
    throw ValidationError("source", "unknown source '" + name + "' (expected e.g. ricker30, spike15, chirp3-80)");
  }
  elastodyn::validate(src);
  return src;
}

neuralvision::Architecture architecture_by_name(const std::string& name) {
  if (name == "frequency_velocity" || name == "fv") return neuralvision::frequency_velocity_architecture();
  if (name == "time_distance" || name == "td") return neuralvision::time_distance_architecture();
  throw ValidationError("neuralvision.architecture", "unknown architecture '" + name + "'");
}

PipelineConfig config_from_toml(std::string_view text, const std::string& origin) {
  const json root = toml::parse(text, origin);
  static const std::set<std::string> known{"geomodel", "elastodyn", "beamform", "neuralvision", "experiment"};
  for (const auto& [k, v] : root.items())
    if (!known.count(k)) throw ValidationError(k, "unknown section");

  PipelineConfig cfg;
  {
    Section s(root, "geomodel");
    auto& m = cfg.model;
    s.number("width_m", m.width_m);
    s.number("depth_m", m.depth_m);
    s.number("pixel_m", m.pixel_m);
    s.interval("soil_factor_range", m.soil_factor_range);
    s.interval("interface_depth_range_m", m.interface_depth_range_m);
    s.interval("bedrock_vs_range_mps", m.bedrock_vs_range_mps);
    s.triple("class_mix", m.class_mix);
    s.interval("band_highly", m.band_highly);
    s.interval("band_slightly", m.band_slightly);
    s.interval("relief_highly_m", m.relief_highly_m);
    s.interval("relief_slightly_m", m.relief_slightly_m);
    s.interval("perturb_corr_v_m", m.perturb_corr_v_m);
    s.interval("perturb_corr_h_m", m.perturb_corr_h_m);
    s.number("perturb_cov", m.perturb_cov);
    s.number("stress_coeff_mps", m.stress_coeff_mps);
    s.number("stress_exponent", m.stress_exponent);
    s.number("k0", m.k0);
    s.number("gravity", m.gravity);
    s.number("p_atm_pa", m.p_atm_pa);
    s.number("vs_floor_mps", m.vs_floor_mps);
    s.number("poisson_soil", m.poisson_soil);
    s.number("poisson_rock", m.poisson_rock);
    s.number("rho_soil", m.rho_soil);
    s.number("rho_rock", m.rho_rock);
    s.integer("seed", m.seed);
    s.finish();
  }
  {
    Section s(root, "elastodyn");
    auto& e = cfg.sim;
    s.number("dt_s", e.dt_s);
    s.number("duration_s", e.duration_s);
    s.number("record_rate_hz", e.record_rate_hz);
    s.number("grid_pixel_m", e.grid_pixel_m);
    s.integer("pml_thickness_cells", e.pml_thickness_cells);
    s.integer("spatial_order", e.spatial_order);
    s.integer("temporal_order", e.temporal_order);
    s.number("pml_reflection", e.pml_reflection);
    s.number("pml_reference_hz", e.pml_reference_hz);
    s.number("pml_multiaxial_ratio", e.pml_multiaxial_ratio);
    s.number("min_points_per_wavelength", e.min_points_per_wavelength);
    s.integer("instability_check_interval", e.instability_check_interval);
    auto& a = cfg.acquisition;
    s.integer("receivers", a.receivers);
    s.number("spacing_m", a.spacing_m);
    s.number("source_offset_m", a.source_offset_m);
    s.text("source", a.source);
    s.number("chirp_duration_s", a.chirp_duration_s);
    s.finish();
  }
  {
    Section s(root, "beamform");
    auto& g = cfg.grid;
    s.number("f_min_hz", g.f_min_hz);
    s.number("f_max_hz", g.f_max_hz);
    s.number("f_step_hz", g.f_step_hz);
    s.number("v_min_mps", g.v_min_mps);
    s.number("v_max_mps", g.v_max_mps);
    s.number("v_step_mps", g.v_step_mps);
    std::string steering = cfg.steering.label();
    s.text("steering", steering);
    cfg.steering = beamform::steering_from_string(steering);
    s.finish();
  }
  {
    Section s(root, "neuralvision");
    auto& t = cfg.training;
    s.text("architecture", cfg.architecture);
    s.number("learning_rate", t.learning_rate);
    s.integer("batch_size", t.batch_size);
    s.integer("epochs", t.epochs);
    std::string optimizer = neuralvision::to_string(t.optimizer);
    s.text("optimizer", optimizer);
    t.optimizer = neuralvision::optimizer_from_string(optimizer);
    std::string loss = neuralvision::to_string(t.loss);
    s.text("loss", loss);
    t.loss = neuralvision::loss_from_string(loss);
    s.number("beta1", t.beta1);
    s.number("beta2", t.beta2);
    s.number("epsilon", t.epsilon);
    s.triple("split", t.split);
    s.integer("seed", t.seed);
    s.finish();
  }
  {
    Section s(root, "experiment");
    auto& x = cfg.experiment;
    s.integer("dataset_size", x.dataset_size);
    s.integer("test_subset", x.test_subset);
    s.strings("variants", x.variants);
    s.text("output_dir", x.output_dir);
    s.integer("workers", x.workers);
    s.finish();
  }
  validate(cfg);
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_toml(ss.str(), path.string());
}

void validate(const PipelineConfig& cfg) {
  geomodel::validate(cfg.model);
  elastodyn::validate(cfg.sim);
  beamform::validate(cfg.grid);
  neuralvision::validate(cfg.training);
  architecture_by_name(cfg.architecture);
  const auto& a = cfg.acquisition;
  if (a.receivers < 2) throw ValidationError("elastodyn.receivers", "need at least 2 receivers");
  if (!(a.spacing_m > 0.0)) throw ValidationError("elastodyn.spacing_m", "must be positive");
  if (!(a.source_offset_m > 0.0)) throw ValidationError("elastodyn.source_offset_m", "must be positive");
  if (!(a.chirp_duration_s > 0.0)) throw ValidationError("elastodyn.chirp_duration_s", "must be positive");
  parse_source(a.source);
  if (cfg.experiment.workers == 0) throw ValidationError("experiment.workers", "must be at least 1");
  parse_variants(cfg.experiment.variants, a);
}

json to_json(const PipelineConfig& cfg) {
  const auto& m = cfg.model;
  const auto& e = cfg.sim;
  const auto& a = cfg.acquisition;
  const auto& g = cfg.grid;
  const auto& t = cfg.training;
  const auto& x = cfg.experiment;
  return {
      {"geomodel",
       {{"width_m", m.width_m},
        {"depth_m", m.depth_m},
        {"pixel_m", m.pixel_m},
        {"soil_factor_range", interval_json(m.soil_factor_range)},
        {"interface_depth_range_m", interval_json(m.interface_depth_range_m)},
        {"bedrock_vs_range_mps", interval_json(m.bedrock_vs_range_mps)},
        {"class_mix", m.class_mix},
        {"band_highly", interval_json(m.band_highly)},
        {"band_slightly", interval_json(m.band_slightly)},
        {"relief_highly_m", interval_json(m.relief_highly_m)},
        {"relief_slightly_m", interval_json(m.relief_slightly_m)},
        {"perturb_corr_v_m", interval_json(m.perturb_corr_v_m)},
        {"perturb_corr_h_m", interval_json(m.perturb_corr_h_m)},
        {"perturb_cov", m.perturb_cov},
        {"stress_coeff_mps", m.stress_coeff_mps},
        {"stress_exponent", m.stress_exponent},
        {"k0", m.k0},
        {"gravity", m.gravity},
        {"p_atm_pa", m.p_atm_pa},
        {"vs_floor_mps", m.vs_floor_mps},
        {"poisson_soil", m.poisson_soil},
        {"poisson_rock", m.poisson_rock},
        {"rho_soil", m.rho_soil},
        {"rho_rock", m.rho_rock},
        {"seed", m.seed}}},
      {"elastodyn",
       {{"dt_s", e.dt_s},
        {"duration_s", e.duration_s},
        {"record_rate_hz", e.record_rate_hz},
        {"grid_pixel_m", e.grid_pixel_m},
        {"pml_thickness_cells", e.pml_thickness_cells},
        {"spatial_order", e.spatial_order},
        {"temporal_order", e.temporal_order},
        {"pml_reflection", e.pml_reflection},
        {"pml_reference_hz", e.pml_reference_hz},
        {"pml_multiaxial_ratio", e.pml_multiaxial_ratio},
        {"min_points_per_wavelength", e.min_points_per_wavelength},
        {"instability_check_interval", e.instability_check_interval},
        {"receivers", a.receivers},
        {"spacing_m", a.spacing_m},
        {"source_offset_m", a.source_offset_m},
        {"source", a.source},
        {"chirp_duration_s", a.chirp_duration_s}}},
      {"beamform",
       {{"f_min_hz", g.f_min_hz},
        {"f_max_hz", g.f_max_hz},
        {"f_step_hz", g.f_step_hz},
        {"v_min_mps", g.v_min_mps},
        {"v_max_mps", g.v_max_mps},
        {"v_step_mps", g.v_step_mps},
        {"steering", cfg.steering.label()}}},
      {"neuralvision",
       {{"architecture", cfg.architecture},
        {"learning_rate", t.learning_rate},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"optimizer", neuralvision::to_string(t.optimizer)},
        {"loss", neuralvision::to_string(t.loss)},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"epsilon", t.epsilon},
        {"split", t.split},
        {"seed", t.seed}}},
      {"experiment",
       {{"dataset_size", x.dataset_size},
        {"test_subset", x.test_subset},
        {"variants", x.variants},
        {"output_dir", x.output_dir},
        {"workers", x.workers}}},
  };
}

std::size_t worker_count(const PipelineConfig& cfg) {
  if (const char* env = std::getenv("FVX_WORKERS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ValidationError("FVX_WORKERS", "must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return cfg.experiment.workers;
}

}  // namespace fvx::orchestry
