#include "fvx/geomodel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "fvx/fft.hpp"
#include "fvx/rng.hpp"

namespace fvx::geomodel {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ValidationError(field, what);
}

void require_interval(const Interval& iv, const char* field) {
  require(iv.lo <= iv.hi, field, "interval is empty");
  require(iv.lo >= 0.0, field, "interval must be nonnegative");
}

bool is_multiple(double big, double small) {
  const double q = big / small;
  return std::abs(q - std::round(q)) < 1e-9 * std::max(1.0, q) && std::round(q) >= 1.0;
}

// Smallest cycle length that makes every class count integral.
std::size_t class_cycle_length(const std::array<double, 3>& mix) {
  for (std::size_t q = 1; q <= 10000; ++q) {
    bool ok = true;
    for (double p : mix) {
      const double n = p * static_cast<double>(q);
      if (std::abs(n - std::round(n)) > 1e-9) {
        ok = false;
        break;
      }
    }
    if (ok) return q;
  }
  return 0;
}

// Zero-mean, unit-variance field with Gaussian autocorrelation
// exp(-(dx/corr_h)^2 - (dz/corr_v)^2), synthesised on a 2x padded periodic grid.
GridD gaussian_random_field(std::size_t rows, std::size_t cols, double pixel_m, double corr_v,
                            double corr_h, CounterRng& rng) {
  const std::size_t pr = 2 * rows;
  const std::size_t pc = 2 * cols;
  const std::size_t pc_half = pc / 2 + 1;

  std::vector<double> noise(pr * pc);
  for (double& v : noise) v = rng.normal();

  std::vector<fftw_complex> spec(pr * pc_half);
  fftw_plan fwd;
  fftw_plan inv;
  {
    std::lock_guard lock(fft::planner_mutex());
    fwd = fftw_plan_dft_r2c_2d(static_cast<int>(pr), static_cast<int>(pc), noise.data(),
                               spec.data(), FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_2d(static_cast<int>(pr), static_cast<int>(pc), spec.data(),
                               noise.data(), FFTW_ESTIMATE);
  }
  fftw_execute(fwd);

  const double pi2 = std::numbers::pi * std::numbers::pi;
  for (std::size_t r = 0; r < pr; ++r) {
    const double mr = r <= pr / 2 ? static_cast<double>(r) : static_cast<double>(r) - pr;
    const double kz = mr / (static_cast<double>(pr) * pixel_m);
    for (std::size_t c = 0; c < pc_half; ++c) {
      const double kx = static_cast<double>(c) / (static_cast<double>(pc) * pixel_m);
      const double amp = std::exp(-0.5 * pi2 * (corr_h * corr_h * kx * kx + corr_v * corr_v * kz * kz));
      spec[r * pc_half + c][0] *= amp;
      spec[r * pc_half + c][1] *= amp;
    }
  }
  fftw_execute(inv);
  {
    std::lock_guard lock(fft::planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }

  GridD field(rows, cols);
  double mean = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      field(r, c) = noise[r * pc + c];
      mean += field(r, c);
    }
  mean /= static_cast<double>(field.size());
  double var = 0.0;
  for (double& v : field.values()) {
    v -= mean;
    var += v * v;
  }
  const double sd = std::sqrt(var / static_cast<double>(field.size()));
  if (sd > 0.0)
    for (double& v : field.values()) v /= sd;
  return field;
}

double lerp_clamped(std::span<const double> xs, double u) {
  const double hi = static_cast<double>(xs.size() - 1);
  u = std::clamp(u, 0.0, hi);
  const auto i0 = static_cast<std::size_t>(std::floor(u));
  const std::size_t i1 = std::min(i0 + 1, xs.size() - 1);
  const double t = u - static_cast<double>(i0);
  return xs[i0] + t * (xs[i1] - xs[i0]);
}

// Coarse-grid coordinate of the centre of fine pixel `i`.
double source_coord(std::size_t i, double target, double pixel) {
  return (static_cast<double>(i) + 0.5) * target / pixel - 0.5;
}

GridD resample(const GridD& g, std::size_t rows, std::size_t cols, double target, double pixel) {
  GridD out(rows, cols);
  const double rmax = static_cast<double>(g.rows() - 1);
  const double cmax = static_cast<double>(g.cols() - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double u = std::clamp(source_coord(r, target, pixel), 0.0, rmax);
    const auto r0 = static_cast<std::size_t>(std::floor(u));
    const std::size_t r1 = std::min<std::size_t>(r0 + 1, g.rows() - 1);
    const double tr = u - static_cast<double>(r0);
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = std::clamp(source_coord(c, target, pixel), 0.0, cmax);
      const auto c0 = static_cast<std::size_t>(std::floor(v));
      const std::size_t c1 = std::min<std::size_t>(c0 + 1, g.cols() - 1);
      const double tc = v - static_cast<double>(c0);
      const double top = g(r0, c0) + tc * (g(r0, c1) - g(r0, c0));
      const double bot = g(r1, c0) + tc * (g(r1, c1) - g(r1, c0));
      out(r, c) = top + tr * (bot - top);
    }
  }
  return out;
}

}  // namespace

std::string to_string(InterfaceClass c) {
  switch (c) {
    case InterfaceClass::highly: return "highly";
    case InterfaceClass::slightly: return "slightly";
    case InterfaceClass::linear: return "linear";
  }
  return "unknown";
}

InterfaceClass interface_class_from_string(const std::string& s) {
  if (s == "highly") return InterfaceClass::highly;
  if (s == "slightly") return InterfaceClass::slightly;
  if (s == "linear") return InterfaceClass::linear;
  throw DataError("unknown interface class '" + s + "'");
}

void validate(const ModelSpec& s) {
  require(s.width_m > 0.0, "width_m", "must be positive");
  require(s.depth_m > 0.0, "depth_m", "must be positive");
  require(s.pixel_m > 0.0, "pixel_m", "must be positive");
  require(is_multiple(s.width_m, s.pixel_m), "pixel_m", "must divide width_m");
  require(is_multiple(s.depth_m, s.pixel_m), "pixel_m", "must divide depth_m");
  require_interval(s.soil_factor_range, "soil_factor_range");
  require_interval(s.interface_depth_range_m, "interface_depth_range_m");
  require(s.interface_depth_range_m.hi < s.depth_m, "interface_depth_range_m",
          "must lie above the model base");
  require_interval(s.bedrock_vs_range_mps, "bedrock_vs_range_mps");
  require(s.bedrock_vs_range_mps.lo > 0.0, "bedrock_vs_range_mps", "must be positive");
  require_interval(s.band_highly, "undulation_band_highly");
  require_interval(s.band_slightly, "undulation_band_slightly");
  require_interval(s.relief_highly_m, "relief_highly_m");
  require_interval(s.relief_slightly_m, "relief_slightly_m");
  require_interval(s.perturb_corr_v_m, "perturb_corr_v_m");
  require_interval(s.perturb_corr_h_m, "perturb_corr_h_m");
  require(s.perturb_corr_v_m.lo > 0.0 && s.perturb_corr_h_m.lo > 0.0, "perturb_corr",
          "correlation lengths must be positive");
  require(s.perturb_cov >= 0.0 && s.perturb_cov < 0.5, "perturb_cov", "must be in [0, 0.5)");
  double sum = 0.0;
  for (double p : s.class_mix) {
    require(p >= 0.0, "class_mix", "fractions must be nonnegative");
    sum += p;
  }
  require(std::abs(sum - 1.0) < 1e-9, "class_mix", "fractions must sum to 1");
  require(class_cycle_length(s.class_mix) > 0, "class_mix",
          "fractions must be multiples of 1/q for some q <= 10000");
  require(s.stress_coeff_mps > 0.0, "stress_coeff_mps", "must be positive");
  require(s.vs_floor_mps > 0.0, "vs_floor_mps", "must be positive");
  require(s.poisson_soil > 0.0 && s.poisson_soil < 0.5, "poisson_soil", "must be in (0, 0.5)");
  require(s.poisson_rock > 0.0 && s.poisson_rock < 0.5, "poisson_rock", "must be in (0, 0.5)");
  require(s.rho_soil > 0.0 && s.rho_rock > 0.0, "rho", "densities must be positive");
}

CropWindow centered_window(double model_width_m, double window_width_m, double depth_m) {
  const double start = 0.5 * (model_width_m - window_width_m);
  return {start, start + window_width_m, depth_m};
}

double vp_over_vs(double nu) { return std::sqrt(2.0 * (1.0 - nu) / (1.0 - 2.0 * nu)); }

double soil_vs(const ModelSpec& s, double depth_m, double soil_factor) {
  const double mean_stress = (1.0 + 2.0 * s.k0) / 3.0 * s.rho_soil * s.gravity * depth_m;
  const double vs =
      soil_factor * s.stress_coeff_mps * std::pow(mean_stress / s.p_atm_pa, s.stress_exponent);
  return std::max(vs, s.vs_floor_mps);
}

InterfaceClass interface_class_for(const ModelSpec& s, std::uint64_t index) {
  const std::size_t q = class_cycle_length(s.class_mix);
  if (q == 0) throw ValidationError("class_mix", "fractions are not commensurate");
  const std::size_t pos = index % q;
  // Largest-deficit interleave over one cycle; ties go to the lower class.
  std::array<double, 3> count{};
  std::size_t chosen = 0;
  for (std::size_t i = 0; i <= pos; ++i) {
    double best = -1e300;
    for (std::size_t k = 0; k < 3; ++k) {
      const double deficit = s.class_mix[k] * static_cast<double>(i + 1) - count[k];
      if (s.class_mix[k] > 0.0 && deficit > best + 1e-12) {
        best = deficit;
        chosen = k;
      }
    }
    count[chosen] += 1.0;
  }
  return static_cast<InterfaceClass>(chosen);
}

VelocityModel generate_model(const ModelSpec& spec, std::uint64_t index) {
  validate(spec);
  CounterRng rng(spec.seed, index);

  VelocityModel m;
  m.pixel_m = spec.pixel_m;
  m.seed = spec.seed;
  m.index = index;
  m.interface_class = interface_class_for(spec, index);

  const auto rows = static_cast<std::size_t>(std::llround(spec.depth_m / spec.pixel_m));
  const auto cols = static_cast<std::size_t>(std::llround(spec.width_m / spec.pixel_m));

  // Draw order is fixed so every parameter is reproducible from (seed, index).
  m.soil_factor = rng.uniform(spec.soil_factor_range.lo, spec.soil_factor_range.hi);
  m.bedrock_vs = rng.uniform(spec.bedrock_vs_range_mps.lo, spec.bedrock_vs_range_mps.hi);
  m.mean_interface_depth =
      rng.uniform(spec.interface_depth_range_m.lo, spec.interface_depth_range_m.hi);
  m.corr_v_m = rng.uniform(spec.perturb_corr_v_m.lo, spec.perturb_corr_v_m.hi);
  m.corr_h_m = rng.uniform(spec.perturb_corr_h_m.lo, spec.perturb_corr_h_m.hi);

  const Interval band =
      m.interface_class == InterfaceClass::highly ? spec.band_highly : spec.band_slightly;
  const Interval relief =
      m.interface_class == InterfaceClass::highly ? spec.relief_highly_m : spec.relief_slightly_m;
  std::array<double, 3> weight{};
  for (std::size_t j = 0; j < 3; ++j) {
    m.undulation_freq[j] = rng.uniform(band.lo, band.hi);
    m.undulation_phase[j] = rng.uniform(0.0, kTwoPi);
    weight[j] = rng.uniform(0.25, 1.0);
  }
  const double relief_target = rng.uniform(relief.lo, relief.hi);

  std::vector<double> undulation(cols, 0.0);
  if (m.interface_class != InterfaceClass::linear) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = (static_cast<double>(c) + 0.5) * spec.pixel_m;
      for (std::size_t j = 0; j < 3; ++j)
        undulation[c] += weight[j] * std::sin(kTwoPi * m.undulation_freq[j] * x + m.undulation_phase[j]);
    }
    const auto [lo, hi] = std::minmax_element(undulation.begin(), undulation.end());
    const double p2p = *hi - *lo;
    const double scale = p2p > 0.0 ? relief_target / p2p : 0.0;
    const double mean = std::accumulate(undulation.begin(), undulation.end(), 0.0) /
                        static_cast<double>(cols);
    for (double& u : undulation) u = scale * (u - mean);
    for (std::size_t j = 0; j < 3; ++j) m.undulation_amp[j] = scale * weight[j];
  } else {
    m.undulation_freq = {};
    m.undulation_phase = {};
  }
  m.interface_depth.resize(cols);
  for (std::size_t c = 0; c < cols; ++c) m.interface_depth[c] = m.mean_interface_depth + undulation[c];

  GridD eps(rows, cols, 0.0);
  if (spec.perturb_cov > 0.0) {
    eps = gaussian_random_field(rows, cols, spec.pixel_m, m.corr_v_m, m.corr_h_m, rng);
    for (double& e : eps.values()) e *= spec.perturb_cov;
  }

  const double ratio_soil = vp_over_vs(spec.poisson_soil);
  const double ratio_rock = vp_over_vs(spec.poisson_rock);
  m.vs = GridD(rows, cols);
  m.vp = GridD(rows, cols);
  m.rho = GridD(rows, cols);
  m.material = Grid2D<std::uint8_t>(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double z = (static_cast<double>(r) + 0.5) * spec.pixel_m;
    const double soil_base = soil_vs(spec, z, m.soil_factor);
    for (std::size_t c = 0; c < cols; ++c) {
      const bool rock = z > m.interface_depth[c];
      double vs;
      if (rock) {
        vs = m.bedrock_vs * (1.0 + eps(r, c));
      } else {
        vs = std::max(soil_base * (1.0 + eps(r, c)), spec.vs_floor_mps);
      }
      m.vs(r, c) = vs;
      m.vp(r, c) = vs * (rock ? ratio_rock : ratio_soil);
      m.rho(r, c) = rock ? spec.rho_rock : spec.rho_soil;
      m.material(r, c) = static_cast<std::uint8_t>(rock ? Material::rock : Material::soil);
    }
  }
  return m;
}

VelocityModel crop(const VelocityModel& model, const CropWindow& w) {
  const double p = model.pixel_m;
  const double tol = 1e-9 * std::max(1.0, model.width_m());
  if (!(w.x_start_m >= -tol && w.x_end_m <= model.width_m() + tol && w.x_start_m < w.x_end_m &&
        w.depth_m > 0.0 && w.depth_m <= model.depth_m() + tol)) {
    std::ostringstream os;
    os << "crop window [" << w.x_start_m << ", " << w.x_end_m << "] x " << w.depth_m
       << " m lies outside the " << model.width_m() << " x " << model.depth_m() << " m model";
    throw RangeError(os.str());
  }
  auto to_index = [&](double x, const char* name) {
    const double q = x / p;
    if (std::abs(q - std::round(q)) > 1e-6)
      throw ValidationError(name, "window edge is not aligned with the pixel grid");
    return static_cast<std::size_t>(std::llround(q));
  };
  const std::size_t c0 = to_index(w.x_start_m, "x_start_m");
  const std::size_t c1 = to_index(w.x_end_m, "x_end_m");
  const std::size_t nr = to_index(w.depth_m, "depth_m");

  VelocityModel out = model;
  out.x_origin_m = model.x_origin_m + static_cast<double>(c0) * p;
  auto sub = [&](const auto& g) {
    std::remove_cvref_t<decltype(g)> s(nr, c1 - c0);
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = c0; c < c1; ++c) s(r, c - c0) = g(r, c);
    return s;
  };
  out.vs = sub(model.vs);
  out.vp = sub(model.vp);
  out.rho = sub(model.rho);
  out.material = sub(model.material);
  out.interface_depth.assign(model.interface_depth.begin() + static_cast<std::ptrdiff_t>(c0),
                             model.interface_depth.begin() + static_cast<std::ptrdiff_t>(c1));
  return out;
}

VelocityModel refine(const VelocityModel& model, double target) {
  const double p = model.pixel_m;
  if (!(target > 0.0) || !(is_multiple(p, target) || is_multiple(target, p)))
    throw ValidationError("target_pixel_m", "must divide the model pixel size or be a multiple of it");
  const auto rows = static_cast<std::size_t>(std::llround(model.depth_m() / target));
  const auto cols = static_cast<std::size_t>(std::llround(model.width_m() / target));
  if (rows == 0 || cols == 0) throw ValidationError("target_pixel_m", "coarser than the model");

  VelocityModel out = model;
  out.pixel_m = target;
  out.vs = resample(model.vs, rows, cols, target, p);
  out.vp = resample(model.vp, rows, cols, target, p);
  out.rho = resample(model.rho, rows, cols, target, p);
  out.material = Grid2D<std::uint8_t>(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto rs = std::min(model.rows() - 1,
                             static_cast<std::size_t>((static_cast<double>(r) + 0.5) * target / p));
    for (std::size_t c = 0; c < cols; ++c) {
      const auto cs = std::min(model.cols() - 1,
                               static_cast<std::size_t>((static_cast<double>(c) + 0.5) * target / p));
      out.material(r, c) = model.material(rs, cs);
    }
  }
  out.interface_depth.resize(cols);
  for (std::size_t c = 0; c < cols; ++c)
    out.interface_depth[c] = lerp_clamped(model.interface_depth, source_coord(c, target, p));
  return out;
}

}  // namespace fvx::geomodel
