#include <xmmintrin.h>
#include <pmmintrin.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fvx/elastodyn.hpp"

namespace fvx::elastodyn {

namespace {

// Taylor coefficients of the 6th-order staggered first derivative.
constexpr float kC1 = 75.0f / 64.0f;
constexpr float kC2 = -25.0f / 384.0f;
constexpr float kC3 = 3.0f / 640.0f;
constexpr int kHalo = 3;

struct Stencil {
  float c1, c2, c3;
};
constexpr Stencil kOrder2{1.0f, 0.0f, 0.0f};
constexpr Stencil kOrder4{9.0f / 8.0f, -1.0f / 24.0f, 0.0f};
constexpr Stencil kOrder6{kC1, kC2, kC3};

// Denormals appear at the leading edge of every stencil-spread wavefront and
// make the kernel an order of magnitude slower; flush them for the solve.
class FlushDenormals {
 public:
  FlushDenormals() : saved_(_mm_getcsr()) {
    _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
    _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
  }
  ~FlushDenormals() { _mm_setcsr(saved_); }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_;
};

// Zero-haloed field; (j, i) with j = depth row, i = column.
class Field {
 public:
  Field(int nz, int nx) : stride_(nx + 2 * kHalo), data_(static_cast<std::size_t>((nz + 2 * kHalo) * stride_), 0.0f) {}
  float* row(int j) { return data_.data() + (j + kHalo) * stride_ + kHalo; }
  const float* row(int j) const { return data_.data() + (j + kHalo) * stride_ + kHalo; }
  float& operator()(int j, int i) { return row(j)[i]; }
  float operator()(int j, int i) const { return row(j)[i]; }
  int stride() const { return stride_; }
  std::vector<float>& raw() { return data_; }

 private:
  int stride_;
  std::vector<float> data_;
};

// psi <- b psi + a d ; d <- d + psi, with coefficients per node.
struct Damping {
  Damping(int nz, int nx) : a(nz, nx), b(nz, nx) {}
  Field a, b;
};

struct Profile {
  double d = 0.0, alpha = 0.0;
};

class Solver {
 public:
  Solver(const geomodel::VelocityModel& model, const SimConfig& cfg)
      : cfg_(cfg),
        h_(cfg.grid_pixel_m),
        npml_(cfg.pml_thickness_cells),
        nxm_(static_cast<int>(model.cols())),
        nzm_(static_cast<int>(model.rows())),
        nx_(nxm_ + 2 * npml_),
        nz_(nzm_ + npml_),
        vx_(nz_, nx_), vz_(nz_, nx_), sxx_(nz_, nx_), szz_(nz_, nx_), sxz_(nz_, nx_),
        bvx_(nz_, nx_), bvz_(nz_, nx_), l2m_(nz_, nx_), lam_(nz_, nx_), mxz_(nz_, nx_),
        p_vx_x_(nz_, nx_), p_vx_z_(nz_, nx_), p_vz_x_(nz_, nx_), p_vz_z_(nz_, nx_),
        p_n_x_(nz_, nx_), p_n_z_(nz_, nx_), p_xz_z_(nz_, nx_), p_xz_x_(nz_, nx_),
        c_vx_x_(nz_, nx_), c_vx_z_(nz_, nx_), c_vz_x_(nz_, nx_), c_vz_z_(nz_, nx_),
        c_n_x_(nz_, nx_), c_n_z_(nz_, nx_), c_xz_z_(nz_, nx_), c_xz_x_(nz_, nx_),
        l2m_fs_(static_cast<std::size_t>(nx_)),
        model_(model) {
    build_material();
    build_cpml();
  }

  int column_of(double x_m) const { return npml_ + static_cast<int>(std::lround(x_m / h_)); }
  int interior_begin() const { return npml_; }

  void step(float force, int src_col, bool track_energy) {
    update_stress();
    apply_images();
    if (track_energy) {
      vx_old_ = vx_.raw();
      vz_old_ = vz_.raw();
    }
    update_velocity();
    vz_(0, src_col) += bvz_(0, src_col) * force / static_cast<float>(h_);
  }

  float vz_surface(int col) const { return vz_(0, col); }

  bool wavefield_finite() const {
    for (int j = 0; j < nz_; ++j) {
      const float* v = vz_.row(j);
      const float* u = vx_.row(j);
      for (int i = 0; i < nx_; ++i)
        if (!std::isfinite(v[i]) || !std::isfinite(u[i])) return false;
    }
    return true;
  }

  // Elastic energy per unit length over the model region (PML excluded).
  // Kinetic energy pairs the velocities either side of the stress level.
  double interior_energy() const {
    long double e = 0.0L;
    const Field old_vx = from_raw(vx_old_);
    const Field old_vz = from_raw(vz_old_);
    for (int j = 0; j < nzm_; ++j) {
      const std::size_t mj = static_cast<std::size_t>(j);
      for (int i = npml_; i < npml_ + nxm_; ++i) {
        const std::size_t mi = static_cast<std::size_t>(i - npml_);
        const double rho = model_.rho(mj, mi);
        const double mu = rho * model_.vs(mj, mi) * model_.vs(mj, mi);
        const double lam = rho * model_.vp(mj, mi) * model_.vp(mj, mi) - 2.0 * mu;
        const double kin = 0.5 * rho *
                           (static_cast<double>(vx_(j, i)) * old_vx(j, i) +
                            static_cast<double>(vz_(j, i)) * old_vz(j, i));
        const double sx = sxx_(j, i), sz = szz_(j, i), sq = sxz_(j, i);
        const double pot = ((lam + 2.0 * mu) * (sx * sx + sz * sz) - 2.0 * lam * sx * sz) /
                               (8.0 * mu * (lam + mu)) +
                           sq * sq / (2.0 * mu);
        e += kin + pot;
      }
    }
    return static_cast<double>(e) * h_ * h_;
  }

 private:
  Field from_raw(const std::vector<float>& raw) const {
    Field f(nz_, nx_);
    f.raw() = raw;
    return f;
  }

  void build_material() {
    auto clampc = [&](int i) { return static_cast<std::size_t>(std::clamp(i - npml_, 0, nxm_ - 1)); };
    auto clampr = [&](int j) { return static_cast<std::size_t>(std::clamp(j, 0, nzm_ - 1)); };
    auto rho = [&](int j, int i) { return model_.rho(clampr(j), clampc(i)); };
    auto mu = [&](int j, int i) {
      const double vs = model_.vs(clampr(j), clampc(i));
      return rho(j, i) * vs * vs;
    };
    auto lam = [&](int j, int i) {
      const double vp = model_.vp(clampr(j), clampc(i));
      return rho(j, i) * vp * vp - 2.0 * mu(j, i);
    };
    const double dt = cfg_.dt_s;
    for (int j = 0; j < nz_; ++j) {
      for (int i = 0; i < nx_; ++i) {
        const double rx = 0.5 * (rho(j, i) + rho(j, i + 1));
        const double rz = 0.5 * (rho(j, i) + rho(j + 1, i));
        bvx_(j, i) = static_cast<float>(dt / (rx * h_));
        bvz_(j, i) = static_cast<float>(dt / (rz * h_));
        const double m = mu(j, i), l = lam(j, i);
        l2m_(j, i) = static_cast<float>(dt * (l + 2.0 * m) / h_);
        lam_(j, i) = static_cast<float>(dt * l / h_);
        const double m00 = mu(j, i), m10 = mu(j, i + 1), m01 = mu(j + 1, i), m11 = mu(j + 1, i + 1);
        const double mh = (m00 > 0 && m10 > 0 && m01 > 0 && m11 > 0)
                              ? 4.0 / (1.0 / m00 + 1.0 / m10 + 1.0 / m01 + 1.0 / m11)
                              : 0.0;
        mxz_(j, i) = static_cast<float>(dt * mh / h_);
      }
    }
    for (int i = 0; i < nx_; ++i) {
      const double m = mu(0, i), l = lam(0, i);
      l2m_fs_[static_cast<std::size_t>(i)] = static_cast<float>(dt * 4.0 * m * (l + m) / (l + 2.0 * m) / h_);
    }
  }

  // Multiaxial CPML: inside a layer the derivatives along the other axis get
  // a fraction of the same damping. Plain CPML grows without bound once a
  // layered waveguide reaches into the side layers.
  void build_cpml() {
    xl_ = npml_;
    xr_ = npml_ + nxm_ - 1;
    zb_ = nzm_ - 1;
    if (npml_ <= 0) return;
    double vp_max = 0.0;
    for (double v : model_.vp.values()) vp_max = std::max(vp_max, v);
    const double L = npml_ * h_;
    const double d0 = -3.0 * vp_max * std::log(cfg_.pml_reflection) / (2.0 * L);
    const double alpha_max = std::numbers::pi * cfg_.pml_reference_hz;
    const double left_edge = npml_ * h_;
    const double right_edge = (npml_ + nxm_ - 1) * h_;
    const double bottom_edge = (nzm_ - 1) * h_;
    auto profile = [&](double depth) {
      if (depth <= 0.0) return Profile{};
      const double r = std::min(depth / L, 1.0);
      return Profile{d0 * r * r, alpha_max * (1.0 - r)};
    };
    const double p = cfg_.pml_multiaxial_ratio;
    // ox, oz: staggered offset of the node in cells.
    auto fill = [&](Damping& out, bool along_x, double ox, double oz) {
      for (int j = 0; j < nz_; ++j) {
        const Profile pz = profile((j + oz) * h_ - bottom_edge);
        for (int i = 0; i < nx_; ++i) {
          const double x = (i + ox) * h_;
          const Profile px = profile(std::max(left_edge - x, x - right_edge));
          const Profile& own = along_x ? px : pz;
          const Profile& cross = along_x ? pz : px;
          const double d = own.d + p * cross.d;
          if (d <= 0.0) continue;
          const double alpha = own.d > 0.0 ? own.alpha : cross.alpha;
          const double bb = std::exp(-(d + alpha) * cfg_.dt_s);
          out.b(j, i) = static_cast<float>(bb);
          out.a(j, i) = static_cast<float>(d * (bb - 1.0) / (d + alpha));
        }
      }
    };
    fill(c_n_x_, true, 0.0, 0.0);
    fill(c_n_z_, false, 0.0, 0.0);
    fill(c_xz_x_, true, 0.5, 0.5);
    fill(c_xz_z_, false, 0.5, 0.5);
    fill(c_vx_x_, true, 0.5, 0.0);
    fill(c_vx_z_, false, 0.5, 0.0);
    fill(c_vz_x_, true, 0.0, 0.5);
    fill(c_vz_z_, false, 0.0, 0.5);
  }

  static Stencil normal_row_stencil(int j) { return j == 1 ? kOrder2 : j == 2 ? kOrder4 : kOrder6; }
  static Stencil shear_row_stencil(int j) { return j == 0 ? kOrder2 : j == 1 ? kOrder4 : kOrder6; }

  template <bool Pml, bool Surface>
  void stress_span(int j, int i0, int i1) {
    const int s = vx_.stride();
    const float* __restrict vx = vx_.row(j);
    const float* __restrict vz = vz_.row(j);
    float* __restrict sxx = sxx_.row(j);
    float* __restrict szz = szz_.row(j);
    float* __restrict sxz = sxz_.row(j);
    const float* __restrict l2m = l2m_.row(j);
    const float* __restrict lam = lam_.row(j);
    const float* __restrict mxz = mxz_.row(j);
    const float* __restrict l2m_fs = l2m_fs_.data();
    float* __restrict pnx = p_n_x_.row(j);
    float* __restrict pnz = p_n_z_.row(j);
    float* __restrict pxzz = p_xz_z_.row(j);
    float* __restrict pxzx = p_xz_x_.row(j);
    const Stencil zn = normal_row_stencil(j);
    const Stencil zs = shear_row_stencil(j);
    const float* __restrict anx = c_n_x_.a.row(j);
    const float* __restrict bnx = c_n_x_.b.row(j);
    const float* __restrict anz = c_n_z_.a.row(j);
    const float* __restrict bnz = c_n_z_.b.row(j);
    const float* __restrict axzx = c_xz_x_.a.row(j);
    const float* __restrict bxzx = c_xz_x_.b.row(j);
    const float* __restrict axzz = c_xz_z_.a.row(j);
    const float* __restrict bxzz = c_xz_z_.b.row(j);

#pragma GCC ivdep
    for (int i = i0; i < i1; ++i) {
      float dvxdx = kC1 * (vx[i] - vx[i - 1]) + kC2 * (vx[i + 1] - vx[i - 2]) + kC3 * (vx[i + 2] - vx[i - 3]);
      float dvzdx = kC1 * (vz[i + 1] - vz[i]) + kC2 * (vz[i + 2] - vz[i - 1]) + kC3 * (vz[i + 3] - vz[i - 2]);
      float dvzdz = zn.c1 * (vz[i] - vz[i - s]) + zn.c2 * (vz[i + s] - vz[i - 2 * s]) +
                    zn.c3 * (vz[i + 2 * s] - vz[i - 3 * s]);
      float dvxdz = zs.c1 * (vx[i + s] - vx[i]) + zs.c2 * (vx[i + 2 * s] - vx[i - s]) +
                    zs.c3 * (vx[i + 3 * s] - vx[i - 2 * s]);
      if constexpr (Pml) {
        pnx[i] = bnx[i] * pnx[i] + anx[i] * dvxdx;
        dvxdx += pnx[i];
        pxzx[i] = bxzx[i] * pxzx[i] + axzx[i] * dvzdx;
        dvzdx += pxzx[i];
        pnz[i] = bnz[i] * pnz[i] + anz[i] * dvzdz;
        dvzdz += pnz[i];
        pxzz[i] = bxzz[i] * pxzz[i] + axzz[i] * dvxdz;
        dvxdz += pxzz[i];
      }
      if constexpr (Surface) {
        sxx[i] += l2m_fs[i] * dvxdx;
        szz[i] = 0.0f;
      } else {
        sxx[i] += l2m[i] * dvxdx + lam[i] * dvzdz;
        szz[i] += lam[i] * dvxdx + l2m[i] * dvzdz;
      }
      sxz[i] += mxz[i] * (dvxdz + dvzdx);
    }
  }

  template <bool Pml>
  void velocity_span(int j, int i0, int i1) {
    const int s = vx_.stride();
    float* __restrict vx = vx_.row(j);
    float* __restrict vz = vz_.row(j);
    const float* __restrict sxx = sxx_.row(j);
    const float* __restrict szz = szz_.row(j);
    const float* __restrict sxz = sxz_.row(j);
    const float* __restrict bvx = bvx_.row(j);
    const float* __restrict bvz = bvz_.row(j);
    float* __restrict pvxx = p_vx_x_.row(j);
    float* __restrict pvxz = p_vx_z_.row(j);
    float* __restrict pvzx = p_vz_x_.row(j);
    float* __restrict pvzz = p_vz_z_.row(j);
    const float* __restrict avxx = c_vx_x_.a.row(j);
    const float* __restrict bvxx = c_vx_x_.b.row(j);
    const float* __restrict avxz = c_vx_z_.a.row(j);
    const float* __restrict bvxz = c_vx_z_.b.row(j);
    const float* __restrict avzx = c_vz_x_.a.row(j);
    const float* __restrict bvzx = c_vz_x_.b.row(j);
    const float* __restrict avzz = c_vz_z_.a.row(j);
    const float* __restrict bvzz = c_vz_z_.b.row(j);

#pragma GCC ivdep
    for (int i = i0; i < i1; ++i) {
      float dsxxdx = kC1 * (sxx[i + 1] - sxx[i]) + kC2 * (sxx[i + 2] - sxx[i - 1]) + kC3 * (sxx[i + 3] - sxx[i - 2]);
      float dsxzdz = kC1 * (sxz[i] - sxz[i - s]) + kC2 * (sxz[i + s] - sxz[i - 2 * s]) +
                     kC3 * (sxz[i + 2 * s] - sxz[i - 3 * s]);
      float dsxzdx = kC1 * (sxz[i] - sxz[i - 1]) + kC2 * (sxz[i + 1] - sxz[i - 2]) + kC3 * (sxz[i + 2] - sxz[i - 3]);
      float dszzdz = kC1 * (szz[i + s] - szz[i]) + kC2 * (szz[i + 2 * s] - szz[i - s]) +
                     kC3 * (szz[i + 3 * s] - szz[i - 2 * s]);
      if constexpr (Pml) {
        pvxx[i] = bvxx[i] * pvxx[i] + avxx[i] * dsxxdx;
        dsxxdx += pvxx[i];
        pvzx[i] = bvzx[i] * pvzx[i] + avzx[i] * dsxzdx;
        dsxzdx += pvzx[i];
        pvxz[i] = bvxz[i] * pvxz[i] + avxz[i] * dsxzdz;
        dsxzdz += pvxz[i];
        pvzz[i] = bvzz[i] * pvzz[i] + avzz[i] * dszzdz;
        dszzdz += pvzz[i];
      }
      vx[i] += bvx[i] * (dsxxdx + dsxzdz);
      vz[i] += bvz[i] * (dsxzdx + dszzdz);
    }
  }

  // Split every row into layer and interior spans. Integer nodes left of
  // xl_, half nodes from xr_ on and every node from row zb_ down carry damping.
  template <typename Fn>
  void for_row_spans(int j, Fn&& fn) {
    if (j >= zb_) {
      fn(std::true_type{}, j, 0, nx_);
      return;
    }
    fn(std::true_type{}, j, 0, xl_);
    fn(std::false_type{}, j, xl_, xr_);
    fn(std::true_type{}, j, xr_, nx_);
  }

  void update_stress() {
    for (int j = 0; j < nz_; ++j) {
      for_row_spans(j, [&](auto pml, int jj, int i0, int i1) {
        constexpr bool p = decltype(pml)::value;
        if (jj == 0)
          stress_span<p, true>(jj, i0, i1);
        else
          stress_span<p, false>(jj, i0, i1);
      });
    }
  }

  void update_velocity() {
    for (int j = 0; j < nz_; ++j)
      for_row_spans(j, [&](auto pml, int jj, int i0, int i1) { velocity_span<decltype(pml)::value>(jj, i0, i1); });
  }

  // Antisymmetric stress images above the free surface.
  void apply_images() {
    float* s0 = szz_.row(0);
    std::fill(s0 - kHalo, s0 + nx_ + kHalo, 0.0f);
    for (int k = 1; k <= kHalo; ++k) {
      float* above = szz_.row(-k);
      const float* below = szz_.row(k);
      for (int i = 0; i < nx_; ++i) above[i] = -below[i];
      float* xa = sxz_.row(-k);
      const float* xb = sxz_.row(k - 1);
      for (int i = 0; i < nx_; ++i) xa[i] = -xb[i];
    }
  }

  SimConfig cfg_;
  double h_;
  int npml_, nxm_, nzm_, nx_, nz_;
  int xl_ = 0, xr_ = 0, zb_ = 0;
  Field vx_, vz_, sxx_, szz_, sxz_;
  Field bvx_, bvz_, l2m_, lam_, mxz_;
  Field p_vx_x_, p_vx_z_, p_vz_x_, p_vz_z_, p_n_x_, p_n_z_, p_xz_z_, p_xz_x_;
  // Damping per derivative, named after the psi field it drives.
  Damping c_vx_x_, c_vx_z_, c_vz_x_, c_vz_z_, c_n_x_, c_n_z_, c_xz_z_, c_xz_x_;
  std::vector<float> l2m_fs_;
  std::vector<float> vx_old_, vz_old_;
  const geomodel::VelocityModel& model_;
};

double stencil_sum() { return std::abs(kC1) + std::abs(kC2) + std::abs(kC3); }

std::size_t record_decimation(const SimConfig& cfg) {
  const double ratio = 1.0 / (cfg.dt_s * cfg.record_rate_hz);
  return static_cast<std::size_t>(std::llround(ratio));
}

}  // namespace

double courant_number(double vp_max, double dt_s, double h_m) {
  return vp_max * dt_s / h_m * std::sqrt(2.0) * stencil_sum();
}

void validate(const SimConfig& cfg) {
  if (!(cfg.dt_s > 0.0)) throw ValidationError("dt_s", "must be positive");
  if (!(cfg.duration_s > 0.0)) throw ValidationError("duration_s", "must be positive");
  if (!(cfg.record_rate_hz > 0.0)) throw ValidationError("record_rate_hz", "must be positive");
  if (!(cfg.grid_pixel_m > 0.0)) throw ValidationError("grid_pixel_m", "must be positive");
  if (cfg.pml_thickness_cells < 0) throw ValidationError("pml_thickness_cells", "must be nonnegative");
  if (cfg.spatial_order != 6) throw ValidationError("spatial_order", "only 6th order is implemented");
  if (cfg.temporal_order != 2) throw ValidationError("temporal_order", "only 2nd order is implemented");
  if (!(cfg.pml_reflection > 0.0 && cfg.pml_reflection < 1.0))
    throw ValidationError("pml_reflection", "must be in (0, 1)");
  if (!(cfg.pml_reference_hz >= 0.0)) throw ValidationError("pml_reference_hz", "must be nonnegative");
  if (!(cfg.pml_multiaxial_ratio >= 0.0 && cfg.pml_multiaxial_ratio <= 1.0))
    throw ValidationError("pml_multiaxial_ratio", "must be in [0, 1]");
  const double ratio = 1.0 / (cfg.dt_s * cfg.record_rate_hz);
  if (std::abs(ratio - std::round(ratio)) > 1e-6 || std::round(ratio) < 1.0)
    throw ValidationError("record_rate_hz", "must divide the simulation rate 1/dt_s");
  if (cfg.instability_check_interval <= 0)
    throw ValidationError("instability_check_interval", "must be positive");
}

AcquisitionGeometry linear_array(std::size_t count, double spacing, double first_x, double offset) {
  AcquisitionGeometry g;
  g.receiver_x_m.reserve(count);
  for (std::size_t k = 0; k < count; ++k) g.receiver_x_m.push_back(first_x + spacing * static_cast<double>(k));
  g.source_x_m = first_x - offset;
  return g;
}

AcquisitionGeometry base_geometry() { return linear_array(48, 1.0, 28.0, 5.0); }

void validate(const AcquisitionGeometry& g) {
  if (g.receiver_x_m.empty()) throw ValidationError("receiver_x_m", "no receivers");
  for (std::size_t k = 1; k < g.receiver_x_m.size(); ++k)
    if (!(g.receiver_x_m[k] > g.receiver_x_m[k - 1]))
      throw ValidationError("receiver_x_m", "positions must be strictly increasing");
  for (double x : g.receiver_x_m)
    if (!std::isfinite(x)) throw ValidationError("receiver_x_m", "non-finite position");
  if (!std::isfinite(g.source_x_m)) throw ValidationError("source_x_m", "non-finite position");
}

ShotGather simulate(const geomodel::VelocityModel& model, const AcquisitionGeometry& geometry,
                    const SourceFunction& source, const SimConfig& cfg, SimDiagnostics* diag) {
  validate(cfg);
  return simulate_with_force(model, geometry, source, make_source(source, cfg.dt_s, cfg.duration_s),
                             cfg, diag);
}

ShotGather simulate_with_force(const geomodel::VelocityModel& model,
                               const AcquisitionGeometry& geometry, const SourceFunction& source,
                               const std::vector<double>& force, const SimConfig& cfg,
                               SimDiagnostics* diag) {
  validate(cfg);
  validate(geometry);
  if (std::abs(model.pixel_m - cfg.grid_pixel_m) > 1e-9)
    throw ValidationError("grid_pixel_m", "model must be refined to the simulation grid first");
  if (model.rows() < 4 || model.cols() < 4) throw ValidationError("model", "grid too small");

  const double width = model.width_m();
  auto inside = [&](double x) { return x >= 0.0 && x <= width - cfg.grid_pixel_m + 1e-9; };
  for (double x : geometry.receiver_x_m)
    if (!inside(x)) throw ValidationError("receiver_x_m", "receiver outside the model interior");
  if (!inside(geometry.source_x_m)) throw ValidationError("source_x_m", "source outside the model interior");

  double vp_max = 0.0, vs_min = 1e300;
  for (double v : model.vp.values()) vp_max = std::max(vp_max, v);
  for (double v : model.vs.values()) vs_min = std::min(vs_min, v);

  SimDiagnostics local;
  SimDiagnostics& d = diag ? *diag : local;
  d = SimDiagnostics{};
  d.courant = courant_number(vp_max, cfg.dt_s, cfg.grid_pixel_m);
  if (d.courant > 1.0) {
    std::ostringstream os;
    os << "CFL violation: Courant number " << d.courant << " > 1 (vp_max " << vp_max
       << " m/s, dt " << cfg.dt_s << " s, h " << cfg.grid_pixel_m << " m)";
    throw NumericalError(os.str());
  }
  const double fmax = source.max_frequency_hz();
  d.points_per_wavelength = vs_min / (fmax * cfg.grid_pixel_m);
  if (d.points_per_wavelength < cfg.min_points_per_wavelength) {
    std::ostringstream os;
    os << "grid dispersion: " << d.points_per_wavelength << " points per minimum wavelength (vs_min "
       << vs_min << " m/s at " << fmax << " Hz, h " << cfg.grid_pixel_m << " m), need "
       << cfg.min_points_per_wavelength;
    throw NumericalError(os.str());
  }

  const std::size_t decim = record_decimation(cfg);
  const auto n_samples = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.record_rate_hz));
  const std::size_t steps = n_samples == 0 ? 0 : (n_samples - 1) * decim;
  d.steps = steps;

  ShotGather out;
  out.geometry = geometry;
  out.rate_hz = cfg.record_rate_hz;
  out.source = source;
  out.traces = GridD(geometry.n_receivers(), n_samples, 0.0);

  bool silent = true;
  for (double f : force)
    if (f != 0.0) silent = false;
  if (silent) {
    if (diag) d.interior_energy.assign(n_samples, 0.0);
    return out;
  }

  FlushDenormals ftz;
  Solver solver(model, cfg);
  const int src_col = solver.column_of(geometry.source_x_m);
  std::vector<int> rec_cols;
  for (double x : geometry.receiver_x_m) rec_cols.push_back(solver.column_of(x));
  if (diag) d.interior_energy.push_back(0.0);

  for (std::size_t n = 0; n < steps; ++n) {
    const bool record = (n + 1) % decim == 0;
    const float f = n < force.size() ? static_cast<float>(force[n]) : 0.0f;
    solver.step(f, src_col, record && diag != nullptr);
    if (record) {
      const std::size_t k = (n + 1) / decim;
      for (std::size_t r = 0; r < rec_cols.size(); ++r) {
        const float v = solver.vz_surface(rec_cols[r]);
        if (!std::isfinite(v)) {
          std::ostringstream os;
          os << "numerical instability: non-finite wavefield at step " << n + 1;
          throw NumericalError(os.str());
        }
        out.traces(r, k) = v;
      }
      if (diag) d.interior_energy.push_back(solver.interior_energy());
    }
    if ((n + 1) % static_cast<std::size_t>(cfg.instability_check_interval) == 0 && !solver.wavefield_finite()) {
      std::ostringstream os;
      os << "numerical instability: non-finite wavefield at step " << n + 1;
      throw NumericalError(os.str());
    }
  }
  return out;
}

ShotGather stack_shots(const std::vector<ShotGather>& gathers) {
  if (gathers.empty()) throw ValidationError("gathers", "nothing to stack");
  const ShotGather& first = gathers.front();
  for (const auto& g : gathers) {
    if (!(g.geometry == first.geometry)) throw ValidationError("geometry", "gathers differ in acquisition geometry");
    if (g.rate_hz != first.rate_hz) throw ValidationError("rate_hz", "gathers differ in sampling rate");
    if (!g.traces.same_shape(first.traces)) throw ValidationError("traces", "gathers differ in length");
  }
  ShotGather out = first;
  const std::size_t n = first.traces.size();
  const long double k = static_cast<long double>(gathers.size());
  for (std::size_t i = 0; i < n; ++i) {
    long double sum = 0.0L;
    for (const auto& g : gathers) sum += g.traces.values()[i];
    out.traces.values()[i] = static_cast<double>(sum / k);
  }
  return out;
}

}  // namespace fvx::elastodyn
