#include "fvx/fft.hpp"

#include <fftw3.h>

#include <vector>

namespace fvx::fft {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

Grid2D<std::complex<double>> real_forward_rows(const GridD& x) {
  const int rows = static_cast<int>(x.rows());
  const int n = static_cast<int>(x.cols());
  const int nc = n / 2 + 1;
  Grid2D<std::complex<double>> out(x.rows(), static_cast<std::size_t>(nc));
  if (rows == 0 || n == 0) return out;

  std::vector<double> in(x.values());
  static_assert(sizeof(std::complex<double>) == sizeof(fftw_complex));
  auto* dst = reinterpret_cast<fftw_complex*>(out.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_many_dft_r2c(1, &n, rows, in.data(), nullptr, 1, n, dst, nullptr, 1, nc,
                                  FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

}  // namespace fvx::fft
