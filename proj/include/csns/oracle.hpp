#pragma once

// Reference solutions for tests. Nothing here touches the solver: only plain
// arrays, closed forms and direct sums.

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "csns/geometry.hpp"
#include "csns/kernel.hpp"

namespace csns::oracle {

struct MomentState {
  double m0 = 1.0;  // mass
  Vec3 m1{};        // momentum
  double m2 = 0.0;  // second moment
};

/// Moments of the kinetic equation with phi = 1 and u = 0.
/// dM1/dt = -M1 (alignment is antisymmetric), and
/// dM2/dt = -2(M0 M2 - |M1|^2) - 2 M2 with |M1|^2 = |M1(0)|^2 e^{-2t}, which an
/// integrating factor e^{2(M0+1)t} solves in closed form.
inline MomentState moment_ode_solution(const MomentState& s0, double t) {
  MomentState s = s0;
  const double e1 = std::exp(-t);
  s.m1 = e1 * s0.m1;
  const double lam = 2.0 * (s0.m0 + 1.0);
  const double decay = std::exp(-lam * t);
  s.m2 = decay * s0.m2 + norm2(s0.m1) / s0.m0 * (std::exp(-2.0 * t) - decay);
  return s;
}

/// Right-hand side of the moment system, for finite-difference checks.
inline std::pair<Vec3, double> moment_ode_rhs(const MomentState& s) {
  return {-1.0 * s.m1, -2.0 * (s.m0 * s.m2 - norm2(s.m1)) - 2.0 * s.m2};
}

/// Two atoms, phi = 1, u = 0. S = w1 V1 + w2 V2 decays like e^{-t},
/// D = V1 - V2 like e^{-(1+M0)t}.
inline std::pair<Vec3, Vec3> two_particle_solution(double w1, double w2, const Vec3& v1, const Vec3& v2, double t) {
  const double m0 = w1 + w2;
  const Vec3 s = std::exp(-t) * (w1 * v1 + w2 * v2);
  const Vec3 d = std::exp(-(1.0 + m0) * t) * (v1 - v2);
  return {(1.0 / m0) * (s + w2 * d), (1.0 / m0) * (s - w1 * d)};
}

// ---------------------------------------------------------------------------
// Taylor-Green vortex on [0, 2 pi)^2

inline void require_tg_box(const BoxSpec& box) {
  if (box.dim != 2 || std::abs(box.length - 2.0 * std::numbers::pi) > 1e-12)
    throw std::invalid_argument("taylor_green: needs d = 2 and L = 2*pi");
}

/// u = e^{-2 nu t}(sin x cos y, -cos x sin y) at the grid nodes, component-major.
inline std::vector<double> taylor_green_velocity(const BoxSpec& box, double t, double nu) {
  require_tg_box(box);
  const std::size_t n = box.n;
  const double h = box.dx();
  const double amp = std::exp(-2.0 * nu * t);
  std::vector<double> out(2 * n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = i * h;
      const double y = j * h;
      out[i * n + j] = amp * std::sin(x) * std::cos(y);
      out[n * n + i * n + j] = -amp * std::cos(x) * std::sin(y);
    }
  return out;
}

/// P = (cos 2x + cos 2y)/4 e^{-4 nu t}, the zero-mean solution of
/// Delta P = -div(u . grad u) for the vortex above.
inline std::vector<double> taylor_green_pressure(const BoxSpec& box, double t, double nu) {
  require_tg_box(box);
  const std::size_t n = box.n;
  const double h = box.dx();
  const double amp = std::exp(-4.0 * nu * t);
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = 0.25 * amp * (std::cos(2.0 * i * h) + std::cos(2.0 * j * h));
  return out;
}

/// 1/2 int |u|^2 = pi^2 e^{-4 nu t}.
inline double taylor_green_energy(double t, double nu) {
  return std::numbers::pi * std::numbers::pi * std::exp(-4.0 * nu * t);
}

// ---------------------------------------------------------------------------
// Heat semigroup

struct ModeEnergy {
  double xi2;     // |xi|^2
  double energy;  // energy carried by the mode at t = 0
};

/// Each mode's energy scaled by e^{-2 nu |xi|^2 t}.
inline std::vector<double> heat_decay_reference(const std::vector<ModeEnergy>& modes, double t, double nu) {
  std::vector<double> out;
  out.reserve(modes.size());
  for (const auto& m : modes) out.push_back(m.energy * std::exp(-2.0 * nu * m.xi2 * t));
  return out;
}

/// int_0^X e^{-a s^2} s^2 ds with a = 2 nu t (flat spectrum in 3D, shell measure s^2).
inline double flat_spectrum_energy(double t, double nu, double xi_max) {
  if (t == 0.0) return xi_max * xi_max * xi_max / 3.0;
  const double a = 2.0 * nu * t;
  const double sa = std::sqrt(a);
  return std::sqrt(std::numbers::pi) / (4.0 * a * sa) * std::erf(sa * xi_max) -
         xi_max * std::exp(-a * xi_max * xi_max) / (2.0 * a);
}

/// The same integral by composite Simpson quadrature.
inline double flat_spectrum_energy_quadrature(double t, double nu, double xi_max, int panels = 20000) {
  const double h = xi_max / panels;
  auto f = [&](double s) { return std::exp(-2.0 * nu * t * s * s) * s * s; };
  double acc = f(0.0) + f(xi_max);
  for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return acc * h / 3.0;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Direct pairwise sums over point masses

struct Particles {
  std::vector<Vec3> x;
  std::vector<Vec3> v;
  std::vector<double> w;
};

/// sum_j w_j phi(|X_i - X_j|)(V_j - V_i), minimal-image distances on the box.
inline std::vector<Vec3> direct_alignment(const BoxSpec& box, const KernelSpec& k, const Particles& p) {
  const std::size_t n = p.w.size();
  std::vector<Vec3> out(n, Vec3{});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double phi = eval_phi(k, periodic_distance(box, p.x[i], p.x[j])).phi;
      out[i] = out[i] + (p.w[j] * phi) * (p.v[j] - p.v[i]);
    }
  return out;
}

/// sum_i sum_j w_i w_j phi(|X_i - X_j|) |V_i - V_j|^2.
inline double direct_alignment_rate(const BoxSpec& box, const KernelSpec& k, const Particles& p) {
  const std::size_t n = p.w.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      s += p.w[i] * p.w[j] * eval_phi(k, periodic_distance(box, p.x[i], p.x[j])).phi * norm2(p.v[i] - p.v[j]);
  return s;
}

/// Classical RK4 on dV_i/dt = alignment + u - V_i with u = 0, so positions
/// stay put. O(N^2) per stage.
inline Particles direct_nbody(const BoxSpec& box, const KernelSpec& k, Particles p, double t_end, double dt) {
  const std::size_t n = p.w.size();
  std::vector<double> phi(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) phi[i * n + j] = eval_phi(k, periodic_distance(box, p.x[i], p.x[j])).phi;
  auto rhs = [&](const std::vector<Vec3>& v) {
    std::vector<Vec3> r(n, Vec3{});
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 s{};
      for (std::size_t j = 0; j < n; ++j) s = s + (p.w[j] * phi[i * n + j]) * (v[j] - v[i]);
      r[i] = s - v[i];
    }
    return r;
  };
  const long steps = std::lround(t_end / dt);
  const double h = t_end / double(steps);
  auto axpy = [&](const std::vector<Vec3>& a, double s, const std::vector<Vec3>& b) {
    std::vector<Vec3> o(n);
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + s * b[i];
    return o;
  };
  for (long s = 0; s < steps; ++s) {
    const auto k1 = rhs(p.v);
    const auto k2 = rhs(axpy(p.v, 0.5 * h, k1));
    const auto k3 = rhs(axpy(p.v, 0.5 * h, k2));
    const auto k4 = rhs(axpy(p.v, h, k3));
    for (std::size_t i = 0; i < n; ++i)
      p.v[i] = p.v[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return p;
}

inline MomentState moments_of(const Particles& p) {
  MomentState m{0.0, {}, 0.0};
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    m.m0 += p.w[i];
    m.m1 = m.m1 + p.w[i] * p.v[i];
    m.m2 += p.w[i] * norm2(p.v[i]);
  }
  return m;
}

/// int_0^T (1 + t)^{17/16} dt.
inline double time_weight_integral(double T) {
  const double p = 33.0 / 16.0;
  return (std::pow(1.0 + T, p) - 1.0) / p;
}

}  // namespace csns::oracle
