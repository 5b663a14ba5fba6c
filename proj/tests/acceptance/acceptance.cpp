// Acceptance run: one PASS/FAIL line per criterion, details indented below it.
// Usage: fvx_acceptance [--only 1,4,11] [--workdir DIR]

#include <sys/wait.h>

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "fvx/beamform.hpp"
#include "fvx/metrics.hpp"
#include "fvx/neuralvision.hpp"
#include "fvx/pipeline.hpp"
#include "fvx/rng.hpp"

namespace fs = std::filesystem;
using namespace fvx;
using namespace fvx::orchestry;
namespace nv = fvx::neuralvision;

namespace {

struct Outcome {
  bool pass = false;
  std::vector<std::string> details;

  void note(const char* fmt, ...) __attribute__((format(printf, 2, 3))) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    details.emplace_back(buf);
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t workers() {
  if (const char* env = std::getenv("FVX_WORKERS")) return std::max<std::size_t>(1, std::strtoul(env, nullptr, 10));
  return std::max(1u, std::thread::hardware_concurrency());
}

// Rayleigh velocity from the cubic in xi = (c / vs)^2:
// xi^3 - 8 xi^2 + (24 - 16 q) xi + 16 (q - 1) = 0, q = (vs / vp)^2, root in (0, 1).
double rayleigh_velocity(double vs, double vp) {
  const double q = (vs / vp) * (vs / vp);
  auto f = [q](double xi) { return ((xi - 8.0) * xi + (24.0 - 16.0 * q)) * xi + 16.0 * (q - 1.0); };
  double xi = 0.9;
  for (int i = 0; i < 100; ++i) {
    const double df = (3.0 * xi - 16.0) * xi + (24.0 - 16.0 * q);
    const double step = f(xi) / df;
    xi -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return vs * std::sqrt(xi);
}

geomodel::VelocityModel half_space(double width_m, double depth_m, double pixel_m, double vs, double vp,
                                   double rho) {
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

// Ricker arrivals with linear moveout, silent at both ends of the record.
elastodyn::ShotGather synthetic_gather(double lag_s) {
  elastodyn::ShotGather g;
  g.geometry = elastodyn::base_geometry();
  g.rate_hz = 400.0;
  g.traces = GridD(48, 800);
  for (std::size_t r = 0; r < 48; ++r) {
    const double x = g.geometry.receiver_x_m[r] - g.geometry.source_x_m;
    for (std::size_t k = 0; k < 800; ++k) {
      const double t = static_cast<double>(k) / 400.0 - lag_s;
      double v = 0.0;
      for (auto [c, fc] : {std::pair{230.0, 30.0}, std::pair{380.0, 12.0}}) {
        const double a = std::numbers::pi * fc * (t - 0.2 - x / c);
        v += (1.0 - 2.0 * a * a) * std::exp(-a * a) / std::sqrt(x);
      }
      g.traces(r, k) = v;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Outcome layer_shapes() {
  Outcome o;
  o.pass = true;
  const std::vector<nv::Shape3> fv_rows = {{398, 76, 32}, {132, 76, 32}, {130, 76, 32}, {43, 76, 32},
                                           {41, 76, 64},  {41, 25, 64},  {39, 23, 128}, {13, 7, 128},
                                           {11, 5, 128},  {1, 1, 7040},  {1, 1, 1152},  {24, 48, 1}};
  for (const auto& arch : {nv::frequency_velocity_architecture(), nv::time_distance_architecture()}) {
    nv::Network<float> net(arch);
    net.initialize(1);
    nv::Tensor<float> x(1, arch.input);
    CounterRng rng(1, 0);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform());
    std::vector<nv::Shape3> shapes;
    const auto t0 = std::chrono::steady_clock::now();
    net.forward(x, &shapes);
    const double dt = seconds_since(t0);
    std::string walk = arch.input.str();
    for (const auto& s : shapes) walk += " -> " + s.str();
    o.note("%s: %s (%.3f s)", arch.name.c_str(), walk.c_str(), dt);
    bool ok = shapes.size() == 12 && shapes[9] == nv::Shape3{1, 1, arch.name == "time_distance" ? 12672u : 7040u} &&
              shapes[10] == nv::Shape3{1, 1, 1152} && shapes[11] == nv::Shape3{24, 48, 1};
    if (arch.name == "frequency_velocity") ok = ok && shapes == fv_rows;
    o.pass = o.pass && ok && dt < 1.0;
  }
  return o;
}

Outcome gradient_fidelity() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst[2] = {0.0, 0.0};
  std::size_t checked[2] = {0, 0};
  for (int pass = 0; pass < 2; ++pass) {
    const auto act = pass == 0 ? nv::Activation::relu : nv::Activation::linear;
    nv::Architecture a;
    a.name = "tiny";
    a.input = {8, 8, 2};
    a.layers = {nv::LayerSpec::conv(3, 3, 4, act), nv::LayerSpec::pool(2, 2), nv::LayerSpec::conv(2, 2, 3, act),
                nv::LayerSpec::flatten(), nv::LayerSpec::dense(8, act), nv::LayerSpec::dense(6),
                nv::LayerSpec::reshape(2, 3)};
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      nv::Network<double> net(a);
      CounterRng rng(seed, 99);
      for (auto& p : net.parameters()) p = rng.uniform(-0.5, 0.5);
      nv::Tensor<double> x(3, a.input), t(3, a.output_shape());
      for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
      for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
      const auto r = nv::gradient_check(net, x, t, nv::Loss::mae, 512, seed);
      worst[pass] = std::max(worst[pass], r.max_relative_error);
      checked[pass] += r.checked;
    }
  }
  const double dt = seconds_since(t0);
  o.note("relu: max relative error %.3e over %zu parameters (limit 1e-4)", worst[0], checked[0]);
  o.note("linear: max relative error %.3e over %zu parameters (limit 1e-7)", worst[1], checked[1]);
  o.note("runtime %.2f s (limit 60 s)", dt);
  o.pass = worst[0] < 1e-4 && worst[1] < 1e-7 && checked[0] > 0 && checked[1] > 0 && dt < 60.0;
  return o;
}

Outcome beamformer_oracle() {
  Outcome o;
  elastodyn::ShotGather g;
  g.geometry = elastodyn::linear_array(48, 1.0, 0.0, 5.0);
  g.traces = GridD(48, 800);
  for (std::size_t r = 0; r < 48; ++r)
    for (std::size_t k = 0; k < 800; ++k)
      g.traces(r, k) = std::cos(2.0 * std::numbers::pi * 20.0 *
                                (static_cast<double>(k) / 400.0 - static_cast<double>(r) / 300.0));
  const auto im = beamform::normalize_per_frequency(beamform::fdbf(g));
  double v = std::nan("");
  for (const auto& p : beamform::extract_peaks(im))
    if (p.frequency_hz == 20.0) v = p.velocity_mps;
  o.note("peak at 20 Hz: %.2f m/s, error %.2f m/s (limit 2.25)", v, v - 300.0);
  o.pass = std::abs(v - 300.0) <= 2.25;
  return o;
}

struct HalfSpaceRun {
  elastodyn::ShotGather gather;
  elastodyn::SimDiagnostics diagnostics;
  elastodyn::SimConfig cfg;
  double vr = 0.0;
  double seconds = 0.0;
};

const HalfSpaceRun& half_space_run() {
  static const HalfSpaceRun run = [] {
    HalfSpaceRun r;
    const double vs = 250.0, vp = vs * geomodel::vp_over_vs(0.33);
    r.vr = rayleigh_velocity(vs, vp);
    const auto model = half_space(104.0, 24.0, r.cfg.grid_pixel_m, vs, vp, 2000.0);
    const auto t0 = std::chrono::steady_clock::now();
    r.gather = elastodyn::simulate(model, elastodyn::base_geometry(), elastodyn::SourceFunction::ricker(), r.cfg,
                                   &r.diagnostics);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Outcome rayleigh_physics() {
  Outcome o;
  const auto& run = half_space_run();
  const auto im = beamform::normalize_per_frequency(beamform::fdbf(run.gather));
  double worst = 0.0;
  std::size_t n = 0;
  for (const auto& p : beamform::extract_peaks(im)) {
    if (p.frequency_hz < 15.0 || p.frequency_hz > 50.0) continue;
    const double err = (p.velocity_mps - run.vr) / run.vr;
    if (std::abs(err) > std::abs(worst)) worst = err;
    ++n;
  }
  o.note("analytic Rayleigh velocity %.3f m/s (Vs 250, nu 0.33)", run.vr);
  o.note("%zu peaks over 15-50 Hz, worst deviation %+.2f%% (limit 5%%)", n, 100.0 * worst);
  o.note("simulation %.1f s (limit 600 s)", run.seconds);
  o.pass = n == 36 && std::abs(worst) < 0.05 && run.seconds <= 600.0;
  return o;
}

Outcome configuration_insensitivity() {
  Outcome o;
  PipelineConfig cfg;
  geomodel::ModelSpec& spec = cfg.model;
  const auto model = geomodel::generate_model(spec, 0);
  o.note("model %s: %s interface, bedrock Vs %.0f m/s, mean interface depth %.1f m", model_id(0).c_str(),
         geomodel::to_string(model.interface_class).c_str(), model.bedrock_vs, model.mean_interface_depth);
  const auto t0 = std::chrono::steady_clock::now();
  const auto base = variant_image(cfg, model, parse_variant("base"));
  o.pass = true;
  for (const char* name : {"rec24@2", "offset20", "chirp3-80"}) {
    const auto im = variant_image(cfg, model, parse_variant(name));
    const double s = beamform::compare_images(base, im);
    o.note("MSSIM(base, %s) = %.4f (limit 0.7)", name, s);
    o.pass = o.pass && s >= 0.7;
  }
  o.note("runtime %.1f s", seconds_since(t0));
  return o;
}

Outcome normalization_identities() {
  Outcome o;
  const auto g = synthetic_gather(0.0);
  const auto raw = beamform::fdbf(g);
  const auto norm = beamform::normalize_per_frequency(raw);

  bool unit_max = true;
  for (std::size_t c = 0; c < norm.power.cols(); ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < norm.power.rows(); ++r) m = std::max(m, norm.power(r, c));
    unit_max = unit_max && m == 1.0;
  }
  o.note("every column max exactly 1: %s", unit_max ? "yes" : "no");

  const auto one = beamform::stack_offsets({raw});
  const auto five = beamform::stack_offsets({raw, raw, raw, raw, raw});
  double stack_diff = 0.0;
  for (std::size_t i = 0; i < one.power.size(); ++i)
    stack_diff = std::max(stack_diff, std::abs(one.power.data()[i] - five.power.data()[i]));
  o.note("stack of 5 identical images vs single: max difference %.2e", stack_diff);

  auto scaled = g;
  for (auto& v : scaled.traces.values()) v *= 123.4;
  const auto s = beamform::normalize_per_frequency(beamform::fdbf(scaled));
  const auto d = beamform::normalize_per_frequency(beamform::fdbf(synthetic_gather(0.0375)));
  double scale_diff = 0.0, shift_diff = 0.0;
  for (std::size_t i = 0; i < norm.power.size(); ++i) {
    scale_diff = std::max(scale_diff, std::abs(norm.power.data()[i] - s.power.data()[i]));
    shift_diff = std::max(shift_diff, std::abs(norm.power.data()[i] - d.power.data()[i]));
  }
  o.note("scale invariance: max difference %.2e (limit 1e-9)", scale_diff);
  o.note("common time-shift invariance: max difference %.2e (limit 1e-9)", shift_diff);
  o.pass = unit_max && stack_diff <= 1e-9 && scale_diff <= 1e-9 && shift_diff <= 1e-9;
  return o;
}

Outcome metric_identities() {
  Outcome o;
  CounterRng rng(7, 0);
  GridD x(24, 48);
  for (auto& v : x.values()) v = rng.uniform(150.0, 700.0);
  metrics::MetricConfig cfg;
  cfg.dynamic_range = 560.0;
  const double m = metrics::mape(x, x);
  const double s = metrics::mssim(x, x, cfg);
  const double c1 = (0.01 * 560.0) * (0.01 * 560.0);
  const double closed = (2.0 * 100.0 * 110.0 + c1) / (100.0 * 100.0 + 110.0 * 110.0 + c1);
  const double constant = metrics::mssim(GridD(24, 48, 100.0), GridD(24, 48, 110.0), cfg);
  o.note("mape(x, x) = %g", m);
  o.note("mssim(x, x) = %.17g", s);
  o.note("constant images: mssim %.9f, closed form %.9f, difference %.2e (limit 1e-6)", constant, closed,
         std::abs(constant - closed));
  o.pass = m == 0.0 && s == 1.0 && std::abs(constant - closed) < 1e-6;
  return o;
}

Outcome pml_quality() {
  Outcome o;
  const auto& run = half_space_run();
  const auto& g = run.gather;
  const double delay = g.source.delay_s();
  const double fc = g.source.center_hz;
  double worst = 0.0;
  for (std::size_t r = 0; r < g.n_receivers(); ++r) {
    const double x = std::abs(g.geometry.receiver_x_m[r] - g.geometry.source_x_m);
    const double after = x / run.vr + delay + 3.0 / fc;
    double peak = 0.0, tail = 0.0;
    for (std::size_t k = 0; k < g.n_samples(); ++k) {
      const double a = std::abs(g.traces(r, k));
      peak = std::max(peak, a);
      if (static_cast<double>(k) / g.rate_hz > after) tail = std::max(tail, a);
    }
    worst = std::max(worst, tail / peak);
  }
  o.note("largest post-Rayleigh residual: %.2e of the trace max (limit 1e-2)", worst);

  const auto& e = run.diagnostics.interior_energy;
  double peak_energy = 0.0;
  for (double v : e) peak_energy = std::max(peak_energy, v);
  const auto quiet = static_cast<std::size_t>(std::ceil(2.0 * delay * g.rate_hz));
  std::size_t increases = 0;
  double largest = 0.0;
  for (std::size_t k = quiet; k + 1 < e.size(); ++k) {
    const double rise = e[k + 1] - e[k];
    largest = std::max(largest, rise / peak_energy);
    if (rise > 1e-9 * peak_energy) ++increases;
  }
  o.note("energy after t = %.3f s: %zu increases above 1e-9 of peak energy, largest relative rise %.2e", 2.0 * delay,
         increases, largest);
  o.pass = worst < 0.01 && increases == 0;
  return o;
}

// 300 model/dispersion pairs on a reduced 64 m domain.
PipelineConfig desk_config() {
  PipelineConfig cfg;
  cfg.model.width_m = 64.0;
  cfg.sim.grid_pixel_m = 0.25;
  cfg.sim.dt_s = 6.25e-5;
  cfg.sim.duration_s = 1.0;
  return cfg;
}

const PairSet& desk_pairs() {
  static const PairSet pairs = [] {
    const auto t0 = std::chrono::steady_clock::now();
    auto p = build_pairs(desk_config(), 0, 300, parse_variant("base"), nv::frequency_velocity_architecture(),
                         workers());
    std::printf("  (built %zu pairs, %zu quarantined, in %.0f s)\n", p.indices.size(), p.quarantined.size(),
                seconds_since(t0));
    std::fflush(stdout);
    return p;
  }();
  return pairs;
}

Outcome overfit_capacity() {
  Outcome o;
  const auto& all = desk_pairs();
  PairSet first;
  for (std::size_t i = 0; i < 32 && i < all.indices.size(); ++i) {
    first.indices.push_back(all.indices[i]);
    first.inputs.push_back(all.inputs[i]);
    first.targets_mps.push_back(all.targets_mps[i]);
    first.classes.push_back(all.classes[i]);
  }
  const auto arch = nv::frequency_velocity_architecture();
  const auto split = split_pairs(first, arch, {1.0, 0.0, 0.0});
  nv::TrainConfig tc;
  tc.epochs = 500;
  tc.vs_norm_max = split.vs_norm_max;
  tc.seed = 1;
  nv::Network<float> net(arch);
  net.initialize(tc.seed);
  double mae = 1.0;
  std::size_t epochs = 0;
  const auto t0 = std::chrono::steady_clock::now();
  nv::train(net, split.train, nullptr, tc, [&](const nv::EpochRecord& r, const nv::Network<float>& n) {
    const auto pred = nv::predict_all(n, split.train);
    mae = nv::batch_loss<float>(pred, split.train.targets, nv::Loss::mae);
    epochs = r.epoch;
    return mae >= 0.01;
  });
  o.note("%zu pairs: training-set MAE %.4f after %zu epochs (limit 0.01 within 500), %.0f s", split.train.size(),
         mae, epochs, seconds_since(t0));
  o.pass = split.train.size() == 32 && mae < 0.01;
  return o;
}

Outcome desk_smoke() {
  Outcome o;
  const auto& pairs = desk_pairs();
  const auto arch = nv::frequency_velocity_architecture();
  const auto split = split_pairs(pairs, arch, {0.7, 0.1, 0.2});
  nv::TrainConfig tc;
  tc.epochs = 10;
  tc.vs_norm_max = split.vs_norm_max;
  tc.seed = 1;
  nv::Network<float> net(arch);
  net.initialize(tc.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto history = nv::train(net, split.train, &split.validation, tc);
  std::string line;
  for (const auto& r : history) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%.2f", line.empty() ? "" : " ", r.validation_mape);
    line += buf;
  }
  o.note("%zu pairs (%zu train, %zu validation), vs_norm_max %.1f m/s", pairs.indices.size(), split.train.size(),
         split.validation.size(), split.vs_norm_max);
  o.note("validation MAPE %% per epoch: %s", line.c_str());
  bool decreasing = history.size() >= 5;
  for (std::size_t e = 1; e < 5 && e < history.size(); ++e)
    decreasing = decreasing && history[e].validation_mape < history[e - 1].validation_mape;
  const double final_mape = history.empty() ? std::nan("") : history.back().validation_mape;
  o.note("strictly decreasing over epochs 1-5: %s; final %.2f%% (limit 20%%); training %.0f s",
         decreasing ? "yes" : "no", final_mape, seconds_since(t0));
  o.pass = pairs.indices.size() >= 300 && history.size() == 10 && decreasing && final_mape < 20.0;
  return o;
}

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = std::string("\"") + FVX_BINARY + "\" --workers 1 --config \"" FVX_TOY_CONFIG "\" " + args +
                          " >>\"" + (dir / "log.txt").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "log.txt") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = os.str();
  }
  return out;
}

Outcome determinism(const fs::path& workdir) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::map<std::string, std::string>> trees;
  for (const char* name : {"run_a", "run_b"}) {
    const fs::path d = workdir / name;
    fs::remove_all(d);
    fs::create_directories(d);
    auto q = [&](const std::string& sub) { return "\"" + (d / sub).string() + "\""; };
    const std::vector<std::string> steps = {
        "genmodels --count 10 --out " + q("models"),
        "simulate --models " + q("models") + " --out " + q("gathers"),
        "disperse " + q("gathers") + " --out " + q("images"),
        "train --inputs " + q("images") + " --models " + q("models") + " --out " + q("net"),
        "predict --network " + q("net/network.fvb") + " " + q("images") + " --out " + q("preds"),
        "evaluate --predictions " + q("preds") + " --models " + q("models") + " --out " + q("eval"),
        "experiment --network " + q("net/network.fvb") + " --split " + q("net/split.json") + " --out " + q("exp")};
    for (const auto& s : steps) {
      const int code = run_cli(d, s);
      if (code != 0) {
        o.note("%s: '%s' exited with %d (see %s)", name, s.substr(0, s.find(' ')).c_str(), code,
               (d / "log.txt").c_str());
        return o;
      }
    }
    trees.push_back(tree_bytes(d));
  }
  std::size_t differing = 0;
  for (const auto& [path, bytes] : trees[0]) {
    const auto it = trees[1].find(path);
    if (it == trees[1].end() || it->second != bytes) {
      if (differing < 5) o.note("differs: %s", path.c_str());
      ++differing;
    }
  }
  o.note("%zu files compared across two runs, %zu differ (%.0f s)", trees[0].size(), differing, seconds_since(t0));
  o.pass = differing == 0 && trees[0].size() == trees[1].size() && trees[0].size() > 40;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string workdir = (fs::temp_directory_path() / "fvx_acceptance").string();
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  app.add_option("--workdir", workdir, "Scratch directory for the CLI runs");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"layer table shape conformance", layer_shapes},
      {"gradient fidelity", gradient_fidelity},
      {"beamformer plane-wave oracle", beamformer_oracle},
      {"Rayleigh velocity of a homogeneous half-space", rayleigh_physics},
      {"configuration insensitivity (MSSIM >= 0.7)", configuration_insensitivity},
      {"normalization and stacking identities", normalization_identities},
      {"metric identities", metric_identities},
      {"absorbing boundary quality", pml_quality},
      {"overfit capacity on 32 pairs", overfit_capacity},
      {"desk-scale end-to-end smoke", desk_smoke},
      {"determinism of the toy pipeline", [&] { return determinism(workdir); }},
  };

  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note("error: %s", e.what());
    }
    std::printf("criterion %d %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first);
    for (const auto& d : o.details) std::printf("  %s\n", d.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
