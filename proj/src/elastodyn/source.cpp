#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fvx/elastodyn.hpp"

namespace fvx::elastodyn {

namespace {

constexpr double kPi = std::numbers::pi;

struct Biquad {
  double b0, b1, b2, a1, a2;  // a0 normalised to 1

  void run(std::vector<double>& x) const {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
};

// 4th-order Butterworth low-pass as two bilinear-transformed sections.
std::array<Biquad, 2> butterworth4_lowpass(double cutoff_hz, double fs_hz) {
  const double w0 = 2.0 * kPi * cutoff_hz / fs_hz;
  const double cosw = std::cos(w0);
  const double one_minus_cos = 2.0 * std::sin(0.5 * w0) * std::sin(0.5 * w0);
  std::array<Biquad, 2> out{};
  const std::array<double, 2> q{1.0 / (2.0 * std::cos(kPi / 8.0)), 1.0 / (2.0 * std::cos(3.0 * kPi / 8.0))};
  for (std::size_t s = 0; s < 2; ++s) {
    const double alpha = std::sin(w0) / (2.0 * q[s]);
    const double a0 = 1.0 + alpha;
    out[s] = {0.5 * one_minus_cos / a0, one_minus_cos / a0, 0.5 * one_minus_cos / a0,
              -2.0 * cosw / a0, (1.0 - alpha) / a0};
  }
  return out;
}

void scale_to_unit_peak(std::vector<double>& x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : x) v /= peak;
}

}  // namespace

std::string to_string(SourceKind k) {
  switch (k) {
    case SourceKind::ricker: return "ricker";
    case SourceKind::filtered_spike: return "filtered_spike";
    case SourceKind::linear_chirp: return "linear_chirp";
  }
  return "unknown";
}

SourceKind source_kind_from_string(const std::string& s) {
  if (s == "ricker") return SourceKind::ricker;
  if (s == "filtered_spike" || s == "spike") return SourceKind::filtered_spike;
  if (s == "linear_chirp" || s == "chirp") return SourceKind::linear_chirp;
  throw ValidationError("source.kind", "unknown source kind '" + s + "'");
}

SourceFunction SourceFunction::ricker(double fc) {
  SourceFunction s;
  s.kind = SourceKind::ricker;
  s.center_hz = fc;
  return s;
}

SourceFunction SourceFunction::filtered_spike(double highcut) {
  SourceFunction s;
  s.kind = SourceKind::filtered_spike;
  s.highcut_hz = highcut;
  return s;
}

SourceFunction SourceFunction::chirp(double f0, double f1, double sweep) {
  SourceFunction s;
  s.kind = SourceKind::linear_chirp;
  s.f0_hz = f0;
  s.f1_hz = f1;
  s.sweep_s = sweep;
  return s;
}

double SourceFunction::max_frequency_hz() const {
  switch (kind) {
    case SourceKind::ricker: return 2.5 * center_hz;
    case SourceKind::filtered_spike: return 2.0 * highcut_hz;
    case SourceKind::linear_chirp: return std::max(f0_hz, f1_hz);
  }
  return 0.0;
}

double SourceFunction::delay_s() const {
  switch (kind) {
    case SourceKind::ricker: return 1.5 / center_hz;
    case SourceKind::filtered_spike: return 3.0 / highcut_hz;
    case SourceKind::linear_chirp: return 0.0;
  }
  return 0.0;
}

std::string SourceFunction::label() const {
  std::ostringstream os;
  switch (kind) {
    case SourceKind::ricker: os << "ricker" << center_hz; break;
    case SourceKind::filtered_spike: os << "spike" << highcut_hz; break;
    case SourceKind::linear_chirp: os << "chirp" << f0_hz << "-" << f1_hz; break;
  }
  return os.str();
}

void validate(const SourceFunction& s) {
  switch (s.kind) {
    case SourceKind::ricker:
      if (!(s.center_hz > 0.0)) throw ValidationError("center_hz", "must be positive");
      break;
    case SourceKind::filtered_spike:
      if (!(s.highcut_hz > 0.0)) throw ValidationError("highcut_hz", "must be positive");
      break;
    case SourceKind::linear_chirp:
      if (!(s.f0_hz > 0.0)) throw ValidationError("f0_hz", "must be positive");
      if (!(s.f1_hz > 0.0)) throw ValidationError("f1_hz", "must be positive");
      if (!(s.sweep_s > 0.0)) throw ValidationError("sweep_s", "must be positive");
      if (!(s.taper_s >= 0.0 && 2.0 * s.taper_s <= s.sweep_s))
        throw ValidationError("taper_s", "must fit twice inside the sweep");
      break;
  }
}

std::vector<double> make_source(const SourceFunction& src, double dt, double duration) {
  validate(src);
  if (!(dt > 0.0)) throw ValidationError("dt_s", "must be positive");
  if (!(duration > 0.0)) throw ValidationError("duration_s", "must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration / dt));
  std::vector<double> out(n, 0.0);

  switch (src.kind) {
    case SourceKind::ricker: {
      const double t0 = src.delay_s();
      for (std::size_t i = 0; i < n; ++i) {
        const double a = kPi * src.center_hz * (static_cast<double>(i) * dt - t0);
        out[i] = (1.0 - 2.0 * a * a) * std::exp(-a * a);
      }
      break;
    }
    case SourceKind::filtered_spike: {
      const auto k = static_cast<std::size_t>(std::llround(src.delay_s() / dt));
      if (k < n) out[k] = 1.0;
      // Forward then backward pass: zero phase, squared Butterworth magnitude.
      const auto sections = butterworth4_lowpass(src.highcut_hz, 1.0 / dt);
      for (const auto& s : sections) s.run(out);
      std::reverse(out.begin(), out.end());
      for (const auto& s : sections) s.run(out);
      std::reverse(out.begin(), out.end());
      break;
    }
    case SourceKind::linear_chirp: {
      const double rate = (src.f1_hz - src.f0_hz) / src.sweep_s;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        if (t > src.sweep_s) break;
        double w = 1.0;
        if (src.taper_s > 0.0) {
          if (t < src.taper_s)
            w = 0.5 * (1.0 - std::cos(kPi * t / src.taper_s));
          else if (t > src.sweep_s - src.taper_s)
            w = 0.5 * (1.0 - std::cos(kPi * (src.sweep_s - t) / src.taper_s));
        }
        out[i] = w * std::sin(2.0 * kPi * (src.f0_hz * t + 0.5 * rate * t * t));
      }
      break;
    }
  }
  scale_to_unit_peak(out);
  return out;
}

}  // namespace fvx::elastodyn
