#include "fvx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fvx::metrics {

namespace {

std::vector<double> gaussian_1d(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - c;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable weighted average over every valid window placement.
GridD filter_valid(const GridD& g, const std::vector<double>& w) {
  const std::size_t n = w.size();
  const std::size_t orows = g.rows() - n + 1;
  const std::size_t ocols = g.cols() - n + 1;
  GridD tmp(g.rows(), ocols);
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < ocols; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += w[k] * g(r, c + k);
      tmp(r, c) = s;
    }
  GridD out(orows, ocols);
  for (std::size_t r = 0; r < orows; ++r)
    for (std::size_t c = 0; c < ocols; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += w[k] * tmp(r + k, c);
      out(r, c) = s;
    }
  return out;
}

GridD product(const GridD& a, const GridD& b) {
  GridD out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

}  // namespace

void validate(const MetricConfig& cfg) {
  if (cfg.window < 1) throw ValidationError("mssim_window", "must be at least 1");
  if (!(cfg.sigma > 0.0)) throw ValidationError("mssim_sigma", "must be positive");
  if (!(cfg.k1 > 0.0) || !(cfg.k2 > 0.0)) throw ValidationError("k1/k2", "must be positive");
  if (!(cfg.dynamic_range > 0.0) || !std::isfinite(cfg.dynamic_range))
    throw ValidationError("dynamic_range", "must be positive and finite");
}

double mape(const GridD& pred, const GridD& truth) {
  if (!pred.same_shape(truth)) throw ValidationError("mape", "shape mismatch");
  if (truth.empty()) throw ValidationError("mape", "empty grids");
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double t = truth.data()[i];
    if (!(t > 0.0)) throw DataError("mape: true value at pixel " + std::to_string(i) + " is not positive");
    sum += 100.0 * std::abs(pred.data()[i] - t) / t;
  }
  return sum / static_cast<double>(truth.size());
}

std::vector<double> gaussian_window(int size, double sigma) {
  const auto w = gaussian_1d(size, sigma);
  std::vector<double> out(w.size() * w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < w.size(); ++j) out[i * w.size() + j] = w[i] * w[j];
  return out;
}

GridD ssim_map(const GridD& a, const GridD& b, const MetricConfig& cfg) {
  validate(cfg);
  if (!a.same_shape(b)) throw ValidationError("mssim", "shape mismatch");
  const auto n = static_cast<std::size_t>(cfg.window);
  if (a.rows() < n || a.cols() < n)
    throw ValidationError("mssim", "grid is smaller than the " + std::to_string(n) + "x" +
                                       std::to_string(n) + " window");
  const auto w = gaussian_1d(cfg.window, cfg.sigma);
  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);

  const GridD mu_a = filter_valid(a, w);
  const GridD mu_b = filter_valid(b, w);
  const GridD aa = filter_valid(product(a, a), w);
  const GridD bb = filter_valid(product(b, b), w);
  const GridD ab = filter_valid(product(a, b), w);

  GridD out(mu_a.rows(), mu_a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double ma = mu_a.data()[i];
    const double mb = mu_b.data()[i];
    const double va = aa.data()[i] - ma * ma;
    const double vb = bb.data()[i] - mb * mb;
    const double cov = ab.data()[i] - ma * mb;
    out.data()[i] = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                    ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return out;
}

double mssim(const GridD& a, const GridD& b, const MetricConfig& cfg) {
  const GridD m = ssim_map(a, b, cfg);
  double sum = 0.0;
  for (double v : m.values()) sum += v;
  return sum / static_cast<double>(m.size());
}

double dynamic_range(const std::vector<GridD>& grids) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& g : grids)
    for (double v : g.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi >= lo)) throw DataError("dynamic_range: no values");
  return hi - lo;
}

}  // namespace fvx::metrics
