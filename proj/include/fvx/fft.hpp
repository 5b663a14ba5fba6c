#pragma once

#include <complex>
#include <mutex>
#include <span>

#include "fvx/common.hpp"

namespace fvx::fft {

/// FFTW's planner is not thread safe; every plan creation and destruction in
/// the project goes through this lock.
std::mutex& planner_mutex();

/// Forward real transform of each row, e^{-i 2 pi f t} convention, unscaled.
/// Result has n/2 + 1 columns.
Grid2D<std::complex<double>> real_forward_rows(const GridD& x);

}  // namespace fvx::fft
