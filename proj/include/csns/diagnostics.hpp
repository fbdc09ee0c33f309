#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "csns/state.hpp"

namespace csns {

struct EnergyParts {
  double total = 0.0;
  double fluid = 0.0;
  double kinetic = 0.0;
};

/// E = 1/2 ||u||^2 + 1/2 sum w |V|^2.
inline EnergyParts energy(const Spectral& sp, const SimState& s) {
  EnergyParts e;
  e.fluid = kinetic_energy(sp, s.u);
  e.kinetic = 0.5 * s.ens.second_moment();
  e.total = e.fluid + e.kinetic;
  return e;
}

struct DissipationRates {
  double grad = 0.0;
  double drag = 0.0;
  double align = 0.0;
};

inline DissipationRates dissipation_terms(const StageEval& ev) { return {ev.grad_rate, ev.drag_rate, ev.align_rate}; }

inline DissipationRates dissipation_terms(const Model& md, const SimState& s) {
  return dissipation_terms(evaluate_stage(md, s.u, s.ens));
}

/// sum w |V - u(X)|^2.
inline double alignment_gap(const SimState& s) {
  double g = 0.0;
  for (std::size_t i = 0; i < s.ens.size(); ++i)
    g += s.ens.weight[i] * norm2(s.ens.velocity[i] - interpolate(s.u.physical(), s.ens.position[i]));
  return g;
}

/// Running energy balance. Channels are integrated per step with the
/// trapezoid rule plus the Euler-Maclaurin end correction -h^2/12 (f'(t1) - f'(t0)),
/// with f' taken from a quadratic through the last three step points. The
/// corrections telescope, so the quadrature error falls well below the
/// time-stepping error the residual is meant to measure.
struct EnergyLedger {
  double e0 = 0.0;
  double e = 0.0;
  double cum_grad = 0.0;
  double cum_drag = 0.0;
  double cum_align = 0.0;  // integral of the full double sum; enters with 1/2

  // quadrature state: the last two step points and the slope at the newest
  double t_prev = 0.0;
  double t_last = 0.0;
  DissipationRates r_prev;
  DissipationRates r_last;
  DissipationRates slope_last;
  int points = 0;

  void start(double energy0) {
    *this = EnergyLedger{};
    e0 = e = energy0;
  }

  void advance(double dt, const DissipationRates& r0, const DissipationRates& r1, double energy1) {
    const double t1 = t_last + dt;
    auto slope = [&](double f_prev, double f0, double f1) {
      if (points < 2) return (f1 - f0) / dt;
      // derivative at t1 of the quadratic through (t_prev, t_last, t1)
      const double h0 = t_last - t_prev;
      const double h1 = dt;
      return f_prev * h1 / (h0 * (h0 + h1)) - f0 * (h0 + h1) / (h0 * h1) + f1 * (h0 + 2.0 * h1) / (h1 * (h0 + h1));
    };
    const DissipationRates d1{slope(r_prev.grad, r0.grad, r1.grad), slope(r_prev.drag, r0.drag, r1.drag),
                              slope(r_prev.align, r0.align, r1.align)};
    const DissipationRates d0 = points == 0 ? d1 : slope_last;
    const double c = dt * dt / 12.0;
    cum_grad += 0.5 * dt * (r0.grad + r1.grad) - c * (d1.grad - d0.grad);
    cum_drag += 0.5 * dt * (r0.drag + r1.drag) - c * (d1.drag - d0.drag);
    cum_align += 0.5 * dt * (r0.align + r1.align) - c * (d1.align - d0.align);
    e = energy1;
    t_prev = t_last;
    r_prev = points == 0 ? r0 : r_last;
    t_last = t1;
    r_last = r1;
    slope_last = d1;
    points = points == 0 ? 2 : points + 1;
  }
};

/// E(t) + 1/2 cum_align + cum_grad + cum_drag - E0.
inline double energy_identity_residual(const EnergyLedger& l) {
  return l.e + 0.5 * l.cum_align + l.cum_grad + l.cum_drag - l.e0;
}

// ---------------------------------------------------------------------------
// Fourier splitting

/// c^2 = 3 (1 + ||rho0||_inf).
inline double splitting_c2(double rho0_inf) { return 3.0 * (1.0 + rho0_inf); }

/// Radius c (t + c^2)^{-1/2} of the low-frequency ball.
inline double splitting_radius(double t, double c2) { return std::sqrt(c2) / std::sqrt(t + c2); }

/// RHS - LHS of dE/dt + 3/(t+c^2) E <= c^2/(t+c^2) int_{|xi|<=r} |u_hat|^2.
inline double fourier_splitting_residual(double t, double e, double dedt, double low, double c2) {
  return c2 / (t + c2) * low - dedt - 3.0 / (t + c2) * e;
}

inline double fourier_splitting_check(const Spectral& sp, const SimState& s, double rho0_inf, double dedt) {
  const double c2 = splitting_c2(rho0_inf);
  const double low = low_freq_energy(sp, s.u, splitting_radius(s.t, c2));
  return fourier_splitting_residual(s.t, energy(sp, s).total, dedt, low, c2);
}

/// Derivative at `at` of the quadratic through (t_k, f_k), k = 0..2.
inline double quadratic_derivative(const double t[3], const double f[3], double at) {
  double d = 0.0;
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3;
    const int k = (i + 2) % 3;
    const double den = (t[i] - t[j]) * (t[i] - t[k]);
    d += f[i] * ((at - t[j]) + (at - t[k])) / den;
  }
  return d;
}

/// dE/dt of a sampled series: centered three-point differences inside,
/// one-sided three-point at the ends, two-point if only two samples exist.
inline std::vector<double> series_derivative(const std::vector<double>& t, const std::vector<double>& f) {
  const std::size_t n = t.size();
  std::vector<double> d(n, 0.0);
  if (n == 2) d[0] = d[1] = (f[1] - f[0]) / (t[1] - t[0]);
  if (n < 3) return d;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i == 0 ? 1 : (i == n - 1 ? n - 2 : i);
    const double tt[3] = {t[c - 1], t[c], t[c + 1]};
    const double ff[3] = {f[c - 1], f[c], f[c + 1]};
    d[i] = quadratic_derivative(tt, ff, t[i]);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Velocity-support bound

struct BoundSample {
  double t;
  double r;      // v-support radius
  double b_inf;  // grid sup |b|
  double u_inf;  // grid sup |u|
};

/// min over samples of R0 + int_0^t (||b||_inf + ||u||_inf) - R(t), with the
/// integral by the trapezoid rule over the given samples.
inline double r_bound_check(const std::vector<BoundSample>& h) {
  if (h.empty()) return 0.0;
  double integral = 0.0;
  double worst = 0.0;
  for (std::size_t i = 1; i < h.size(); ++i) {
    integral += 0.5 * (h[i].t - h[i - 1].t) * (h[i].b_inf + h[i].u_inf + h[i - 1].b_inf + h[i - 1].u_inf);
    worst = std::min(worst, h[0].r + integral - h[i].r);
  }
  return worst;
}

/// ||b||_inf <= (mass * 2 E_kinetic)^{1/2}; returns RHS - LHS.
inline double cauchy_margin(double b_inf, double mass, double e_kinetic) {
  return std::sqrt(std::max(0.0, mass * 2.0 * e_kinetic)) - b_inf;
}

/// 2 (1 + ||rho0||_inf)(||u||^2 + gap) - E.
inline double equivalence_margin(double e, double e_fluid, double gap, double rho0_inf) {
  return 2.0 * (1.0 + rho0_inf) * (2.0 * e_fluid + gap) - e;
}

// ---------------------------------------------------------------------------
// Time-weighted drag and decay fits

inline double time_weight(double t) { return std::pow(1.0 + t, 17.0 / 16.0); }

/// Trapezoid cumulative of (1+t)^{17/16} drag_rate(t).
inline std::vector<double> time_weighted_drag(const std::vector<double>& t, const std::vector<double>& drag) {
  std::vector<double> out(t.size(), 0.0);
  for (std::size_t i = 1; i < t.size(); ++i)
    out[i] = out[i - 1] + 0.5 * (t[i] - t[i - 1]) * (time_weight(t[i]) * drag[i] + time_weight(t[i - 1]) * drag[i - 1]);
  return out;
}

struct DecayFit {
  double t_a = 0.0;
  double t_b = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 1.0;
  std::size_t samples = 0;
  std::vector<std::string> warnings;
};

/// Largest time at which a box of side L still mimics whole-space decay.
inline double validity_time(double length, double nu) { return (length / 4.0) * (length / 4.0) / nu; }

/// Least-squares slope of log E against log(1 + t) over samples in [t_a, t_b].
/// Refuses windows past the whole-space validity time when the box is given.
inline DecayFit fit_decay_exponent(const std::vector<double>& t, const std::vector<double>& e, double t_a, double t_b,
                                   std::optional<double> t_valid = std::nullopt) {
  if (t.size() != e.size()) throw std::invalid_argument("fit_decay_exponent: series length mismatch");
  if (!(t_b > t_a)) throw std::invalid_argument("fit_decay_exponent: empty window");
  if (t_valid && t_b > *t_valid)
    throw std::invalid_argument("fit_decay_exponent: window ends at t = " + std::to_string(t_b) +
                                " beyond the validity time (L/4)^2/nu = " + std::to_string(*t_valid));
  DecayFit fit;
  fit.t_a = t_a;
  fit.t_b = t_b;
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_a || t[i] > t_b) continue;
    if (!(e[i] > 0.0)) throw std::invalid_argument("fit_decay_exponent: nonpositive value at t = " + std::to_string(t[i]));
    x.push_back(std::log1p(t[i]));
    y.push_back(std::log(e[i]));
  }
  fit.samples = x.size();
  if (x.empty()) throw std::invalid_argument("fit_decay_exponent: empty window");
  if (x.size() < 10) throw std::invalid_argument("fit_decay_exponent: fewer than 10 samples in window");
  const double n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  if (t_b < 5.0 * t_a) fit.warnings.push_back("window is narrow (t_b < 5 t_a); the slope is poorly constrained");
  return fit;
}

// ---------------------------------------------------------------------------
// Output record

struct DiagnosticRecord {
  double t = 0.0;
  double e = 0.0;
  double e_fluid = 0.0;
  double e_kinetic = 0.0;
  double grad_rate = 0.0;
  double drag_rate = 0.0;
  double align_rate = 0.0;
  double ledger_residual = 0.0;
  double r = 0.0;
  double b_inf = 0.0;
  double u_inf = 0.0;
  double rho_l1 = 0.0;
  double rho_l2 = 0.0;
  double rho_linf = 0.0;
  Vec3 momentum{};
  double lowfreq_energy = 0.0;
  double fs_residual = 0.0;
  double alignment_gap = 0.0;
  double tw_drag_cum = 0.0;

  bool operator==(const DiagnosticRecord&) const = default;
};

inline std::vector<std::string> record_columns(int dim) {
  std::vector<std::string> c = {"t",      "E",      "E_fluid", "E_kinetic", "grad_rate", "drag_rate",
                                "align_rate", "ledger_residual", "R", "b_inf", "u_inf", "rho_l1",
                                "rho_l2", "rho_linf", "momentum_x", "momentum_y"};
  if (dim == 3) c.push_back("momentum_z");
  for (const char* s : {"lowfreq_energy", "fs_residual", "alignment_gap", "tw_drag_cum"}) c.push_back(s);
  return c;
}

inline std::vector<double> record_values(const DiagnosticRecord& r, int dim) {
  std::vector<double> v = {r.t,           r.e,         r.e_fluid, r.e_kinetic, r.grad_rate, r.drag_rate,
                           r.align_rate,  r.ledger_residual, r.r, r.b_inf, r.u_inf, r.rho_l1,
                           r.rho_l2,      r.rho_linf,  r.momentum[0], r.momentum[1]};
  if (dim == 3) v.push_back(r.momentum[2]);
  for (double x : {r.lowfreq_energy, r.fs_residual, r.alignment_gap, r.tw_drag_cum}) v.push_back(x);
  return v;
}

inline DiagnosticRecord record_from_values(const std::vector<double>& v, int dim) {
  if (v.size() != record_columns(dim).size()) throw std::invalid_argument("diagnostic row has the wrong column count");
  DiagnosticRecord r;
  std::size_t i = 0;
  for (double* p : {&r.t, &r.e, &r.e_fluid, &r.e_kinetic, &r.grad_rate, &r.drag_rate, &r.align_rate,
                    &r.ledger_residual, &r.r, &r.b_inf, &r.u_inf, &r.rho_l1, &r.rho_l2, &r.rho_linf})
    *p = v[i++];
  r.momentum[0] = v[i++];
  r.momentum[1] = v[i++];
  if (dim == 3) r.momentum[2] = v[i++];
  for (double* p : {&r.lowfreq_energy, &r.fs_residual, &r.alignment_gap, &r.tw_drag_cum}) *p = v[i++];
  return r;
}

}  // namespace csns
