#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "csns/config.hpp"
#include "csns/field.hpp"
#include "csns/kernel.hpp"
#include "csns/parallel.hpp"
#include "csns/spectral.hpp"

namespace csns {

/// Weighted point samples of f: sum_i w_i delta(x - X_i) delta(v - V_i).
/// Weights are fixed at initialization.
struct ParticleEnsemble {
  int dim = 3;
  std::vector<Vec3> position;
  std::vector<Vec3> velocity;
  std::vector<double> weight;

  std::size_t size() const { return weight.size(); }
  bool empty() const { return weight.empty(); }

  /// Sum of weights, always accumulated in index order.
  double total_mass() const {
    double s = 0.0;
    for (double w : weight) s += w;
    return s;
  }
  Vec3 momentum() const {
    Vec3 s{};
    for (std::size_t i = 0; i < size(); ++i) s = s + weight[i] * velocity[i];
    return s;
  }
  /// sum w |V|^2
  double second_moment() const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += weight[i] * norm2(velocity[i]);
    return s;
  }

  bool operator==(const ParticleEnsemble&) const = default;
};

/// Maximum particle speed; 0 for an empty ensemble.
inline double v_support_radius(const ParticleEnsemble& ens) {
  double r = 0.0;
  for (const auto& v : ens.velocity) r = std::max(r, norm2(v));
  return std::sqrt(r);
}

// ---------------------------------------------------------------------------
// Initial sampling

namespace detail {

inline Vec3 truncated_gaussian_velocity(std::mt19937_64& rng, int dim, const Vec3& mean, double sigma, double r0) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    Vec3 v{};
    for (int a = 0; a < dim; ++a) v[a] = mean[a] + sigma * g(rng);
    if (norm(v) <= r0) return v;
  }
}

inline Vec3 uniform_ball_velocity(std::mt19937_64& rng, int dim, double r0) {
  std::uniform_real_distribution<double> u(-r0, r0);
  for (;;) {
    Vec3 v{};
    for (int a = 0; a < dim; ++a) v[a] = u(rng);
    if (norm(v) <= r0) return v;
  }
}

}  // namespace detail

/// Draw an ensemble of `count` particles with unit total mass and |V_i| <= r0.
/// `init` must have its defaults filled (see validate_config).
inline ParticleEnsemble sample_initial(const BoxSpec& box, const ParticleInit& init, std::int64_t count, double r0,
                                       std::mt19937_64& rng) {
  if (count < 0) throw std::invalid_argument("sample_initial: negative particle count");
  ParticleEnsemble ens;
  ens.dim = box.dim;
  const std::size_t n = std::size_t(count);
  ens.position.resize(n);
  ens.velocity.resize(n);
  ens.weight.assign(n, n ? 1.0 / double(n) : 0.0);
  if (n == 0) return ens;

  const Vec3 center = init.center.value_or(Vec3{0.5 * box.length, 0.5 * box.length,
                                                box.dim == 3 ? 0.5 * box.length : 0.0});
  const double sx = init.sigma_x.value_or(box.length / 8.0);
  const double sv = init.sigma_v.value_or(0.5 * r0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, box.length);

  switch (init.kind) {
    case ParticleProfile::gaussian_bump:
      for (std::size_t i = 0; i < n; ++i) {
        Vec3 x{};
        for (int a = 0; a < box.dim; ++a) x[a] = center[a] + sx * g(rng);
        ens.position[i] = wrap_position(box, x);
        ens.velocity[i] = detail::truncated_gaussian_velocity(rng, box.dim, init.velocity, sv, r0);
      }
      break;
    case ParticleProfile::uniform_ball:
      for (std::size_t i = 0; i < n; ++i) {
        Vec3 x{};
        for (int a = 0; a < box.dim; ++a) x[a] = uni(rng);
        ens.position[i] = wrap_position(box, x);
        ens.velocity[i] = detail::uniform_ball_velocity(rng, box.dim, r0);
      }
      break;
    case ParticleProfile::flocked:
      for (std::size_t i = 0; i < n; ++i) {
        Vec3 x{};
        for (int a = 0; a < box.dim; ++a) x[a] = uni(rng);
        ens.position[i] = wrap_position(box, x);
        ens.velocity[i] = init.velocity;
      }
      break;
    case ParticleProfile::lattice_bump: {
      // Quiet start: regular lattice, weights follow the Gaussian bump.
      const int side = int(std::lround(std::pow(double(n), 1.0 / box.dim)));
      if (std::size_t(ipow(side, box.dim)) != n)
        throw std::invalid_argument("sample_initial: lattice_bump needs a perfect d-th power count");
      const double h = box.length / side;
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = i;
        Vec3 x{};
        for (int a = box.dim - 1; a >= 0; --a) {
          x[a] = (double(r % side) + 0.5) * h;
          r /= side;
        }
        ens.position[i] = x;
        const double dist = periodic_distance(box, x, center);
        ens.weight[i] = std::exp(-0.5 * dist * dist / (sx * sx));
        total += ens.weight[i];
        ens.velocity[i] = detail::truncated_gaussian_velocity(rng, box.dim, init.velocity, sv, r0);
      }
      for (auto& w : ens.weight) w /= total;
      break;
    }
  }
  return ens;
}

// ---------------------------------------------------------------------------
// Cloud-in-cell transfer

/// Multilinear (cloud-in-cell) weights of the 2^d nodes around x.
struct CicStencil {
  CicStencil() {}  // left uninitialized: stencils are built in bulk
  std::array<std::size_t, 8> node;
  std::array<double, 8> weight;
  int count = 0;
};

inline CicStencil cic_stencil(const BoxSpec& box, const Vec3& x) {
  const double inv = 1.0 / box.dx();
  std::array<int, 3> lo{};
  std::array<int, 3> hi{};
  std::array<double, 3> frac{};
  for (int a = 0; a < box.dim; ++a) {
    const double xa = (x[a] >= 0.0 && x[a] < box.length) ? x[a] : wrap_coordinate(x[a], box.length);
    const double s = xa * inv;
    const double fl = std::floor(s);
    frac[a] = s - fl;
    int i0 = int(fl);
    if (i0 >= box.n) i0 -= box.n;
    lo[a] = i0;
    hi[a] = i0 + 1 == box.n ? 0 : i0 + 1;
  }
  // Corner c takes the upper node on axis a when bit (dim - 1 - a) of c is set.
  CicStencil st;
  const std::size_t n = std::size_t(box.n);
  const double w0[2] = {1.0 - frac[0], frac[0]};
  const double w1[2] = {1.0 - frac[1], frac[1]};
  const std::size_t r0[2] = {std::size_t(lo[0]) * n, std::size_t(hi[0]) * n};
  const std::size_t c1[2] = {std::size_t(lo[1]), std::size_t(hi[1])};
  if (box.dim == 2) {
    st.count = 4;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        st.node[2 * i + j] = r0[i] + c1[j];
        st.weight[2 * i + j] = w0[i] * w1[j];
      }
    return st;
  }
  const double w2[2] = {1.0 - frac[2], frac[2]};
  const std::size_t c2[2] = {std::size_t(lo[2]), std::size_t(hi[2])};
  st.count = 8;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        st.node[4 * i + 2 * j + k] = (r0[i] + c1[j]) * n + c2[k];
        st.weight[4 * i + 2 * j + k] = w0[i] * w1[j] * w2[k];
      }
  return st;
}

inline std::vector<CicStencil> cic_stencils(const BoxSpec& box, const std::vector<Vec3>& pos) {
  std::vector<CicStencil> st(pos.size());
  parallel_for(pos.size(), [&](std::size_t i) { st[i] = cic_stencil(box, pos[i]); });
  return st;
}

/// Interpolate the first min(components, 3) components of f with a stencil.
inline Vec3 interpolate(const RealField& f, const CicStencil& st) {
  Vec3 out{};
  for (int c = 0; c < f.components() && c < 3; ++c) {
    const auto col = f[c];
    double s = 0.0;
    for (int k = 0; k < st.count; ++k) s += st.weight[k] * col[st.node[k]];
    out[c] = s;
  }
  return out;
}

inline double interpolate_scalar(const RealField& f, const CicStencil& st, int component = 0) {
  const auto col = f[component];
  double s = 0.0;
  for (int k = 0; k < st.count; ++k) s += st.weight[k] * col[st.node[k]];
  return s;
}

inline Vec3 interpolate(const RealField& f, const Vec3& x) { return interpolate(f, cic_stencil(f.box(), x)); }

enum class DepositMode { deterministic, fast };

/// Particles per deposition chunk; fixed so chunked sums do not depend on threads.
inline constexpr std::size_t deposit_chunk = 16384;

/// Scatter per-particle values (K components) to a density field:
/// out[c](node) += value_c * W_node / dx^d. Deterministic mode accumulates
/// fixed chunks into private buffers merged in chunk order; fast mode uses
/// atomic adds into one buffer.
template <int K, typename ValueFn>
RealField deposit(const BoxSpec& box, const std::vector<CicStencil>& st, ValueFn&& value,
                  DepositMode mode = DepositMode::deterministic) {
  RealField out(box, K);
  const double inv_vol = 1.0 / box.cell_volume();
  const ChunkPlan plan{st.size(), deposit_chunk};
  auto scatter = [&](RealField& dst, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const std::array<double, K> v = value(i);
      const auto& s = st[i];
      for (int c = 0; c < K; ++c) {
        auto col = dst[c];
        const double vc = v[c] * inv_vol;
        for (int k = 0; k < s.count; ++k) col[s.node[k]] += vc * s.weight[k];
      }
    }
  };
  if (plan.count() <= 1) {
    scatter(out, 0, st.size());
    return out;
  }
  if (mode == DepositMode::fast) {
    for_each_chunk(plan, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const std::array<double, K> v = value(i);
        const auto& s = st[i];
        for (int c = 0; c < K; ++c) {
          auto col = out[c];
          const double vc = v[c] * inv_vol;
          for (int k = 0; k < s.count; ++k)
            std::atomic_ref<double>(col[s.node[k]]).fetch_add(vc * s.weight[k], std::memory_order_relaxed);
        }
      }
    });
    return out;
  }
  std::vector<RealField> parts(plan.count());
  for_each_chunk(plan, [&](std::size_t c, std::size_t b, std::size_t e) {
    parts[c] = RealField(box, K);
    scatter(parts[c], b, e);
  });
  auto& dst = out.raw();
  for (const auto& p : parts) {
    const auto& src = p.raw();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Moments and kernel convolution

/// Grid moments of f and their kernel convolutions a = phi*rho, b = phi*j, c_e = phi*e.
struct MomentFields {
  RealField rho;  // sum w
  RealField j;    // sum w V
  RealField e;    // sum w |V|^2
  RealField a;
  RealField b;
  RealField ce;
};

namespace detail {
// Components rho, j_1..j_d, e stacked in one field.
inline RealField deposit_moment_stack(const ParticleEnsemble& ens, const std::vector<CicStencil>& st,
                                      const BoxSpec& box, DepositMode mode) {
  if (box.dim == 2)
    return deposit<4>(
        box, st,
        [&](std::size_t i) {
          const double w = ens.weight[i];
          const Vec3& v = ens.velocity[i];
          return std::array<double, 4>{w, w * v[0], w * v[1], w * norm2(v)};
        },
        mode);
  return deposit<5>(
      box, st,
      [&](std::size_t i) {
        const double w = ens.weight[i];
        const Vec3& v = ens.velocity[i];
        return std::array<double, 5>{w, w * v[0], w * v[1], w * v[2], w * norm2(v)};
      },
      mode);
}

// Components rho, j_1..j_d only.
inline RealField deposit_mass_momentum(const ParticleEnsemble& ens, const std::vector<CicStencil>& st,
                                       const BoxSpec& box, DepositMode mode) {
  if (box.dim == 2)
    return deposit<3>(
        box, st,
        [&](std::size_t i) {
          const double w = ens.weight[i];
          const Vec3& v = ens.velocity[i];
          return std::array<double, 3>{w, w * v[0], w * v[1]};
        },
        mode);
  return deposit<4>(
      box, st,
      [&](std::size_t i) {
        const double w = ens.weight[i];
        const Vec3& v = ens.velocity[i];
        return std::array<double, 4>{w, w * v[0], w * v[1], w * v[2]};
      },
      mode);
}

// Split a (scalar, d-vector) stack into two fields.
inline void unstack(const RealField& all, RealField& s0, RealField& vec) {
  const BoxSpec& box = all.box();
  s0 = RealField(box, 1, no_init);
  vec = RealField(box, box.dim, no_init);
  std::copy(all[0].begin(), all[0].end(), s0[0].begin());
  std::copy(all.raw().begin() + all.size(), all.raw().begin() + (box.dim + 1) * all.size(), vec.raw().begin());
}

// Split a (scalar, d-vector, scalar) stack into three fields.
inline void unstack(const RealField& all, RealField& s0, RealField& vec, RealField& s1) {
  const BoxSpec& box = all.box();
  const int d = box.dim;
  s0 = RealField(box, 1, no_init);
  vec = RealField(box, d, no_init);
  s1 = RealField(box, 1, no_init);
  std::copy(all[0].begin(), all[0].end(), s0[0].begin());
  std::copy(all.raw().begin() + all.size(), all.raw().begin() + (d + 1) * all.size(), vec.raw().begin());
  std::copy(all[d + 1].begin(), all[d + 1].end(), s1[0].begin());
}
}  // namespace detail

/// CIC deposition of rho, j, e. The convolved members are left empty.
inline MomentFields deposit_moments(const ParticleEnsemble& ens, const BoxSpec& box,
                                    DepositMode mode = DepositMode::deterministic) {
  const auto st = cic_stencils(box, ens.position);
  MomentFields m;
  detail::unstack(detail::deposit_moment_stack(ens, st, box, mode), m.rho, m.j, m.e);
  return m;
}

/// Spectral multiplier of the periodized kernel: convolution with phi becomes
/// c_k -> L^d phi_k c_k, where phi_k are the normalized coefficients of phi
/// sampled at minimal-image distances from the origin node.
class KernelTransform {
 public:
  KernelTransform(const Spectral& sp, const KernelSpec& k) : kernel_(k) {
    const BoxSpec& box = sp.box();
    multiplier_.assign(box.spectral_points(), 0.0);
    const double vol = box.volume();
    if (k.kind == KernelKind::constant || k.beta == 0.0) {
      multiplier_[0] = vol * k.amplitude;
      return;
    }
    const Vec3 origin{};
    RealField phi = sample_field(box, 1, [&](const Vec3& x) {
      return Vec3{eval_phi(k, periodic_distance(box, x, origin)).phi, 0.0, 0.0};
    });
    const SpectralField ph = sp.forward(phi);
    for (std::size_t i = 0; i < multiplier_.size(); ++i) multiplier_[i] = vol * ph[0][i].real();
  }

  const KernelSpec& kernel() const { return kernel_; }
  const std::vector<double>& multiplier() const { return multiplier_; }

  /// phi * f for every component of f.
  RealField convolve(const Spectral& sp, const RealField& f) const {
    SpectralField F = sp.forward(f);
    for (int c = 0; c < F.components(); ++c) {
      auto col = F[c];
      for (std::size_t k = 0; k < col.size(); ++k) col[k] *= multiplier_[k];
    }
    return sp.inverse(F);
  }

 private:
  KernelSpec kernel_;
  std::vector<double> multiplier_;
};

/// Fill a, b, c_e from the deposited rho, j, e.
inline void convolve_kernel(MomentFields& m, const KernelTransform& kt, const Spectral& sp) {
  const BoxSpec& box = sp.box();
  const int d = box.dim;
  RealField stack(box, d + 2);
  std::copy(m.rho[0].begin(), m.rho[0].end(), stack[0].begin());
  for (int a = 0; a < d; ++a) std::copy(m.j[a].begin(), m.j[a].end(), stack[1 + a].begin());
  std::copy(m.e[0].begin(), m.e[0].end(), stack[d + 1].begin());
  detail::unstack(kt.convolve(sp, stack), m.a, m.b, m.ce);
}

/// L[f](X, V) = b(X) - a(X) V with multilinear interpolation of a and b.
inline Vec3 alignment_force(const MomentFields& m, const Vec3& x, const Vec3& v) {
  const CicStencil st = cic_stencil(m.a.box(), x);
  const double a = interpolate_scalar(m.a, st);
  return interpolate(m.b, st) - a * v;
}

inline Vec3 interpolate_velocity(const VelocityField& u, const Vec3& x) { return interpolate(u.physical(), x); }

/// Drag forcing h = j - rho u, realized as the deposit of w_i (V_i - u(X_i)).
/// Depositing the particle-level relative velocity keeps h adjoint to the
/// interpolation used for the particle drag, so the exchange conserves
/// momentum and dissipates exactly sum w |V - u(X)|^2.
inline RealField drag_field(const ParticleEnsemble& ens, const std::vector<CicStencil>& st,
                            const std::vector<Vec3>& u_at, const BoxSpec& box,
                            DepositMode mode = DepositMode::deterministic) {
  if (box.dim == 2)
    return deposit<2>(
        box, st,
        [&](std::size_t i) {
          const double w = ens.weight[i];
          return std::array<double, 2>{w * (ens.velocity[i][0] - u_at[i][0]), w * (ens.velocity[i][1] - u_at[i][1])};
        },
        mode);
  return deposit<3>(
      box, st,
      [&](std::size_t i) {
        const Vec3 r = ens.velocity[i] - u_at[i];
        const double w = ens.weight[i];
        return std::array<double, 3>{w * r[0], w * r[1], w * r[2]};
      },
      mode);
}

inline RealField drag_field(const ParticleEnsemble& ens, const VelocityField& u,
                            DepositMode mode = DepositMode::deterministic) {
  const BoxSpec& box = u.physical().box();
  const auto st = cic_stencils(box, ens.position);
  std::vector<Vec3> u_at(ens.size());
  for (std::size_t i = 0; i < ens.size(); ++i) u_at[i] = interpolate(u.physical(), st[i]);
  return drag_field(ens, st, u_at, box, mode);
}

// ---------------------------------------------------------------------------
// Characteristics

/// Time derivatives along characteristics: dX/dt = u(X), dV/dt = L[f] + u(X) - V.
/// Without drag the u(X) - V term is dropped.
struct ParticleRates {
  std::vector<Vec3> dx;
  std::vector<Vec3> dv;
};

inline ParticleRates particle_rates(const ParticleEnsemble& ens, const std::vector<CicStencil>& st,
                                    const MomentFields& m, const std::vector<Vec3>& u_at, bool drag = true) {
  ParticleRates r;
  r.dx.resize(ens.size());
  r.dv.resize(ens.size());
  parallel_for(ens.size(), [&](std::size_t i) {
    const double a = interpolate_scalar(m.a, st[i]);
    const Vec3 b = interpolate(m.b, st[i]);
    const Vec3& v = ens.velocity[i];
    r.dx[i] = u_at[i];
    r.dv[i] = drag ? (b - a * v) + (u_at[i] - v) : b - a * v;
  });
  return r;
}

/// Convolved moments a, b (and c_e) for the ensemble on the given stencils.
/// Without `with_energy` the e and c_e members stay empty.
inline MomentFields interaction_fields(const ParticleEnsemble& ens, const std::vector<CicStencil>& st,
                                       const KernelTransform& kt, const Spectral& sp, DepositMode mode,
                                       bool with_energy = true) {
  if (!with_energy) {
    const RealField all = detail::deposit_mass_momentum(ens, st, sp.box(), mode);
    MomentFields m;
    detail::unstack(kt.convolve(sp, all), m.a, m.b);
    detail::unstack(all, m.rho, m.j);
    return m;
  }
  const RealField all = detail::deposit_moment_stack(ens, st, sp.box(), mode);
  MomentFields m;
  detail::unstack(kt.convolve(sp, all), m.a, m.b, m.ce);
  detail::unstack(all, m.rho, m.j, m.e);
  return m;
}

/// Euler move X + dt dX, V + dt dV with periodic wrap.
inline ParticleEnsemble advance_particles(const ParticleEnsemble& base, const ParticleRates& r, double dt,
                                          const BoxSpec& box) {
  ParticleEnsemble out = base;
  parallel_for(base.size(), [&](std::size_t i) {
    out.position[i] = wrap_position(box, base.position[i] + dt * r.dx[i]);
    out.velocity[i] = base.velocity[i] + dt * r.dv[i];
  });
  return out;
}

/// Heun combination X + dt/2 (k1 + k2), V + dt/2 (k1 + k2).
inline ParticleEnsemble combine_particles(const ParticleEnsemble& base, const ParticleRates& r1,
                                          const ParticleRates& r2, double dt, const BoxSpec& box) {
  ParticleEnsemble out = base;
  const double h = 0.5 * dt;
  parallel_for(base.size(), [&](std::size_t i) {
    out.position[i] = wrap_position(box, base.position[i] + h * (r1.dx[i] + r2.dx[i]));
    out.velocity[i] = base.velocity[i] + h * (r1.dv[i] + r2.dv[i]);
  });
  return out;
}

inline void check_finite(const ParticleEnsemble& ens, const char* where) {
  for (std::size_t i = 0; i < ens.size(); ++i)
    for (int a = 0; a < 3; ++a)
      if (!std::isfinite(ens.position[i][a]) || !std::isfinite(ens.velocity[i][a]))
        throw NumericalError(std::string(where) + ": non-finite particle state");
}

/// One RK2 (Heun) step of the characteristics with the fluid velocity u held
/// fixed; the interaction fields are re-deposited at the predictor stage.
/// Weights are never touched.
inline ParticleEnsemble characteristic_step(const ParticleEnsemble& ens, const KernelTransform& kt,
                                            const Spectral& sp, const VelocityField& u, double dt,
                                            DepositMode mode = DepositMode::deterministic) {
  const BoxSpec& box = sp.box();
  auto stage = [&](const ParticleEnsemble& e) {
    const auto st = cic_stencils(box, e.position);
    const MomentFields m = interaction_fields(e, st, kt, sp, mode);
    std::vector<Vec3> u_at(e.size());
    parallel_for(e.size(), [&](std::size_t i) { u_at[i] = interpolate(u.physical(), st[i]); });
    return particle_rates(e, st, m, u_at);
  };
  const ParticleRates r1 = stage(ens);
  const ParticleEnsemble pred = advance_particles(ens, r1, dt, box);
  const ParticleRates r2 = stage(pred);
  ParticleEnsemble out = combine_particles(ens, r1, r2, dt, box);
  check_finite(out, "characteristic_step");
  return out;
}

// ---------------------------------------------------------------------------
// Density norms

inline constexpr double p_infinity = std::numeric_limits<double>::infinity();

/// Grid quadrature of ||rho||_{L^p} for p in {1, 2, inf}.
inline std::vector<double> density_lp_norms(const RealField& rho, std::span<const double> ps) {
  const double dv = rho.box().cell_volume();
  std::vector<double> out;
  out.reserve(ps.size());
  for (double p : ps) {
    const auto col = rho[0];
    if (p == 1.0) {
      double s = 0.0;
      for (double v : col) s += std::abs(v);
      out.push_back(s * dv);
    } else if (p == 2.0) {
      double s = 0.0;
      for (double v : col) s += v * v;
      out.push_back(std::sqrt(s * dv));
    } else if (std::isinf(p) && p > 0) {
      double m = 0.0;
      for (double v : col) m = std::max(m, std::abs(v));
      out.push_back(m);
    } else {
      throw std::invalid_argument("density_lp_norms: unsupported p (use 1, 2 or infinity)");
    }
  }
  return out;
}

}  // namespace csns
