#include "fvx/beamform.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "fvx/fft.hpp"
#include "fvx/metrics.hpp"

namespace fvx::beamform {

namespace {

using cplx = std::complex<double>;

std::size_t count_steps(double span, double step) {
  const double q = span / step;
  return static_cast<std::size_t>(std::llround(q));
}

bool same_grid(const DispersionImage& a, const DispersionImage& b) {
  return a.grid == b.grid && a.power.same_shape(b.power);
}

}  // namespace

std::size_t DispersionGrid::n_frequencies() const {
  return count_steps(f_max_hz - f_min_hz, f_step_hz) + 1;
}

std::size_t DispersionGrid::n_velocities() const {
  // Left edges strictly below v_max.
  return static_cast<std::size_t>(std::ceil((v_max_mps - v_min_mps) / v_step_mps - 1e-9));
}

void validate(const DispersionGrid& g) {
  if (!(g.f_min_hz > 0.0)) throw ValidationError("f_min_hz", "must be positive");
  if (!(g.f_step_hz > 0.0)) throw ValidationError("f_step_hz", "must be positive");
  if (!(g.f_max_hz >= g.f_min_hz)) throw ValidationError("f_max_hz", "must be >= f_min_hz");
  if (!(g.v_min_mps > 0.0)) throw ValidationError("v_min_mps", "must be positive");
  if (!(g.v_step_mps > 0.0)) throw ValidationError("v_step_mps", "must be positive");
  if (!(g.v_max_mps > g.v_min_mps)) throw ValidationError("v_max_mps", "must exceed v_min_mps");
  const double q = (g.f_max_hz - g.f_min_hz) / g.f_step_hz;
  if (std::abs(q - std::round(q)) > 1e-9 * std::max(1.0, q))
    throw ValidationError("f_step_hz", "must divide the frequency range");
}

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::raw: return "raw";
    case Normalization::per_frequency: return "per_frequency";
    case Normalization::absolute_max: return "absolute_max";
  }
  return "unknown";
}

Normalization normalization_from_string(const std::string& s) {
  if (s == "raw") return Normalization::raw;
  if (s == "per_frequency") return Normalization::per_frequency;
  if (s == "absolute_max") return Normalization::absolute_max;
  throw ValidationError("normalization", "unknown normalization '" + s + "'");
}

std::string SteeringMode::label() const {
  std::string out = kind == SteeringKind::plane ? "plane" : "cylindrical";
  if (weighting == Weighting::sqrt_distance) out += "+sqrt_distance";
  return out;
}

SteeringMode steering_from_string(const std::string& s) {
  if (s == "plane") return SteeringMode::plane();
  if (s == "cylindrical" || s == "cylindrical+sqrt_distance") return SteeringMode::cylindrical();
  if (s == "plane+sqrt_distance") return {SteeringKind::plane, Weighting::sqrt_distance};
  if (s == "cylindrical+none") return {SteeringKind::cylindrical, Weighting::none};
  throw ValidationError("steering", "unknown steering mode '" + s + "'");
}

DispersionImage fdbf(const elastodyn::ShotGather& gather, const DispersionGrid& grid,
                     const SteeringMode& mode) {
  validate(grid);
  const std::size_t nr = gather.n_receivers();
  if (nr < 2) throw ValidationError("receivers", "beamforming needs at least 2 receivers");
  if (gather.geometry.n_receivers() != nr)
    throw ValidationError("geometry", "receiver count does not match the traces");
  const std::size_t ns = gather.n_samples();
  if (ns < 2) throw ValidationError("samples", "record too short");
  if (!(gather.rate_hz > 0.0)) throw ValidationError("rate_hz", "must be positive");
  if (grid.f_max_hz > 0.5 * gather.rate_hz)
    throw ValidationError("f_max_hz", "exceeds the Nyquist frequency of the record");

  const std::size_t nf = grid.n_frequencies();
  const std::size_t nv = grid.n_velocities();
  DispersionImage img;
  img.grid = grid;
  img.power = GridD(nv, nf);
  img.normalization = Normalization::raw;
  img.degenerate_columns.assign(nf, 0);
  img.geometry = gather.geometry;
  img.source_label = gather.source.label();
  img.steering = mode;

  const auto spectra = fft::real_forward_rows(gather.traces);

  std::vector<double> dist(nr);
  for (std::size_t n = 0; n < nr; ++n)
    dist[n] = std::abs(gather.geometry.receiver_x_m[n] - gather.geometry.source_x_m);

  const double df = gather.rate_hz / static_cast<double>(ns);
  const double phase0 = mode.kind == SteeringKind::cylindrical ? std::numbers::pi / 4.0 : 0.0;
  std::vector<cplx> x(nr);
  bool any_energy = false;
  for (std::size_t i = 0; i < nf; ++i) {
    const double f = grid.frequency(i);
    const auto bin = static_cast<std::size_t>(std::llround(f / df));
    for (std::size_t n = 0; n < nr; ++n) {
      x[n] = spectra(n, bin);
      if (mode.weighting == Weighting::sqrt_distance) x[n] *= std::sqrt(dist[n]);
    }
    const bool column_energy =
        std::any_of(x.begin(), x.end(), [](const cplx& c) { return c != cplx(0.0, 0.0); });
    if (!column_energy) {
      img.degenerate_columns[i] = 1;
      continue;
    }
    any_energy = true;
    const double w = 2.0 * std::numbers::pi * f;
    for (std::size_t k = 0; k < nv; ++k) {
      const double kw = w / grid.velocity(k);
      cplx acc(0.0, 0.0);
      // conj(e_n) X_n with e_n = exp(-i (k r_n - phase0)).
      for (std::size_t n = 0; n < nr; ++n) acc += std::polar(1.0, kw * dist[n] - phase0) * x[n];
      img.power(k, i) = std::norm(acc);
    }
  }
  img.degenerate = !any_energy;
  return img;
}

DispersionImage normalize_per_frequency(const DispersionImage& image) {
  DispersionImage out = image;
  const std::size_t nv = out.power.rows();
  const std::size_t nf = out.power.cols();
  out.degenerate_columns.assign(nf, 0);
  bool any = false;
  for (std::size_t i = 0; i < nf; ++i) {
    double mx = 0.0;
    for (std::size_t k = 0; k < nv; ++k) mx = std::max(mx, out.power(k, i));
    if (!(mx > 0.0)) {
      out.degenerate_columns[i] = 1;
      for (std::size_t k = 0; k < nv; ++k) out.power(k, i) = 0.0;
      continue;
    }
    any = true;
    for (std::size_t k = 0; k < nv; ++k) out.power(k, i) /= mx;
  }
  out.degenerate = !any;
  out.normalization = Normalization::per_frequency;
  return out;
}

DispersionImage normalize_absolute_max(const DispersionImage& image) {
  DispersionImage out = image;
  double mx = 0.0;
  for (double v : out.power.values()) mx = std::max(mx, v);
  if (mx > 0.0)
    for (double& v : out.power.values()) v /= mx;
  out.degenerate = !(mx > 0.0);
  out.normalization = Normalization::absolute_max;
  return out;
}

DispersionImage stack_offsets(const std::vector<DispersionImage>& images) {
  if (images.empty()) throw ValidationError("images", "nothing to stack");
  for (const auto& im : images) {
    if (!same_grid(im, images.front())) throw ValidationError("grid", "stacked images differ in grid");
    if (im.normalization == Normalization::per_frequency)
      throw ValidationError("normalization", "stack raw or absolute-max images");
  }
  DispersionImage sum = images.front();
  std::fill(sum.power.values().begin(), sum.power.values().end(), 0.0);
  for (const auto& im : images) {
    double mx = 0.0;
    for (double v : im.power.values()) mx = std::max(mx, v);
    if (!(mx > 0.0)) continue;
    for (std::size_t j = 0; j < sum.power.size(); ++j) sum.power.data()[j] += im.power.data()[j] / mx;
  }
  return normalize_per_frequency(sum);
}

std::vector<Peak> extract_peaks(const DispersionImage& image) {
  std::vector<Peak> out;
  const std::size_t nv = image.power.rows();
  const std::size_t nf = image.power.cols();
  for (std::size_t i = 0; i < nf; ++i) {
    if (i < image.degenerate_columns.size() && image.degenerate_columns[i]) continue;
    std::size_t best = 0;
    double mx = -1.0;
    for (std::size_t k = 0; k < nv; ++k)
      if (image.power(k, i) > mx) {  // strict: first (lowest velocity) wins ties
        mx = image.power(k, i);
        best = k;
      }
    if (!(mx > 0.0)) continue;
    out.push_back({image.grid.frequency(i), image.grid.velocity(best)});
  }
  return out;
}

WavelengthLimit alias_limit(double receiver_spacing_m) {
  if (!(receiver_spacing_m > 0.0)) throw ValidationError("receiver_spacing_m", "must be positive");
  return {2.0 * receiver_spacing_m, false};
}

WavelengthLimit nearfield_limit(double source_x_m, const std::vector<double>& receiver_x_m) {
  if (receiver_x_m.empty()) throw ValidationError("receiver_x_m", "no receivers");
  const double centre = std::accumulate(receiver_x_m.begin(), receiver_x_m.end(), 0.0) /
                        static_cast<double>(receiver_x_m.size());
  const double lambda = 2.0 * std::abs(centre - source_x_m);
  return {lambda, !(lambda > 0.0)};
}

double compare_images(const DispersionImage& a, const DispersionImage& b) {
  if (!same_grid(a, b)) throw ValidationError("grid", "compared images differ in grid");
  metrics::MetricConfig cfg;
  cfg.dynamic_range = 1.0;
  return metrics::mssim(a.power, b.power, cfg);
}

}  // namespace fvx::beamform
