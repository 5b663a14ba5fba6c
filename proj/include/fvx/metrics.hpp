#pragma once

#include <vector>

#include "fvx/common.hpp"

namespace fvx::metrics {

struct MetricConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

void validate(const MetricConfig& cfg);

/// Mean absolute percentage error, pixel-wise against `truth`.
double mape(const GridD& pred, const GridD& truth);

/// Mean SSIM over every position where the Gaussian window fits inside the grids.
double mssim(const GridD& a, const GridD& b, const MetricConfig& cfg = {});

/// Local SSIM values at the valid window positions.
GridD ssim_map(const GridD& a, const GridD& b, const MetricConfig& cfg = {});

/// max - min over all pixels of all grids; the natural SSIM range for Vs images.
double dynamic_range(const std::vector<GridD>& grids);

/// Normalised Gaussian window weights (window x window, row-major, sums to 1).
std::vector<double> gaussian_window(int size, double sigma);

}  // namespace fvx::metrics
