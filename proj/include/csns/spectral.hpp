#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>

#include "csns/fft.hpp"
#include "csns/field.hpp"
#include "csns/geometry.hpp"

namespace csns {

/// Transform plans plus wavenumber tables for one box; shared read-only.
class Spectral {
 public:
  explicit Spectral(const BoxSpec& box) : fft_(std::make_shared<Fft>(box)), modes_(wavenumbers(box)) {}

  const BoxSpec& box() const { return modes_.box; }
  const WavenumberGrid& modes() const { return modes_; }
  SpectralField forward(const RealField& f) const { return fft_->forward(f); }
  RealField inverse(const SpectralField& F) const { return fft_->inverse(F); }

 private:
  std::shared_ptr<const Fft> fft_;
  WavenumberGrid modes_;
};

/// Largest |xi . F(xi)| relative to the largest |xi| |F(xi)|.
inline double divergence_defect(const Spectral& sp, const SpectralField& F) {
  const auto& m = sp.modes();
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    Complex div{};
    double mag = 0.0;
    for (int a = 0; a < F.components(); ++a) {
      div += m.xi[k][a] * F[a][k];
      mag += std::norm(F[a][k]);
    }
    num = std::max(num, std::norm(div));
    den = std::max(den, m.xi2[k] * mag);
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

/// Orthogonal projection onto divergence-free fields: F <- (I - xi xi^T/|xi|^2) F.
/// The mean mode passes through; Nyquist modes are removed because their
/// derivative has no real-valued representation.
inline SpectralField leray_project(const Spectral& sp, SpectralField F) {
  const auto& m = sp.modes();
  const int d = F.components();
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m.nyquist[k]) {
      for (int a = 0; a < d; ++a) F[a][k] = 0.0;
      continue;
    }
    if (m.xi2[k] == 0.0) continue;
    Complex proj{};
    for (int a = 0; a < d; ++a) proj += m.xi[k][a] * F[a][k];
    proj /= m.xi2[k];
    for (int a = 0; a < d; ++a) F[a][k] -= m.xi[k][a] * proj;
  }
  return F;
}

/// Zero every mode outside the 2/3-rule band.
inline void dealias(const Spectral& sp, SpectralField& F) {
  const auto& m = sp.modes();
  for (int a = 0; a < F.components(); ++a) {
    auto c = F[a];
    for (std::size_t k = 0; k < m.size(); ++k)
      if (m.dealias[k]) c[k] = 0.0;
  }
}

/// Divergence-free velocity held spectrally, with the physical samples cached.
class VelocityField {
 public:
  VelocityField() = default;

  /// Wrap coefficients as given; the flag records whether they pass the 1e-12 check.
  static VelocityField from_spectral(const Spectral& sp, SpectralField coeffs) {
    VelocityField u;
    u.physical_ = sp.inverse(coeffs);
    u.divergence_free_ = divergence_defect(sp, coeffs) <= 1e-12;
    u.spectral_ = std::move(coeffs);
    return u;
  }

  /// Transform physical samples, projecting out the gradient part unless told not to.
  static VelocityField from_physical(const Spectral& sp, const RealField& samples, bool project = true) {
    auto c = sp.forward(samples);
    if (project) c = leray_project(sp, std::move(c));
    return from_spectral(sp, std::move(c));
  }

  static VelocityField zero(const Spectral& sp) {
    return from_spectral(sp, SpectralField(sp.box(), sp.box().dim));
  }

  const SpectralField& spectral() const { return spectral_; }
  const RealField& physical() const { return physical_; }
  bool divergence_free() const { return divergence_free_; }
  int dim() const { return spectral_.components(); }

 private:
  SpectralField spectral_;
  RealField physical_;
  bool divergence_free_ = false;
};

/// Spectral divergence of u (x) u, i.e. u . grad u for solenoidal u, with the
/// 2/3 rule applied to the inputs of the product and to the result.
inline SpectralField nonlinear_term(const Spectral& sp, const VelocityField& u) {
  const int d = u.dim();
  const auto& m = sp.modes();
  SpectralField trunc = u.spectral();
  dealias(sp, trunc);
  const RealField w = sp.inverse(trunc);

  const int npairs = d * (d + 1) / 2;
  RealField prod(sp.box(), npairs, no_init);
  int p = 0;
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b, ++p)
      for (std::size_t i = 0; i < w.size(); ++i) prod[p][i] = w[a][i] * w[b][i];
  const SpectralField P = sp.forward(prod);

  auto pair = [d](int a, int b) {
    if (a > b) std::swap(a, b);
    return a * d - a * (a - 1) / 2 + (b - a);
  };
  SpectralField out(sp.box(), d);
  const Complex I{0.0, 1.0};
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m.dealias[k]) continue;
    for (int a = 0; a < d; ++a) {
      Complex s{};
      for (int b = 0; b < d; ++b) s += m.xi[k][b] * P[pair(a, b)][k];
      out[a][k] = I * s;
    }
  }
  return out;
}

/// Right-hand side P(-div(u (x) u) + h) of the projected momentum equation.
inline SpectralField fluid_rhs(const Spectral& sp, const VelocityField& u, const SpectralField* forcing) {
  SpectralField r = nonlinear_term(sp, u);
  for (auto& v : r.raw()) v = -v;
  if (forcing) {
    auto& rr = r.raw();
    const auto& fr = forcing->raw();
    for (std::size_t i = 0; i < rr.size(); ++i) rr[i] += fr[i];
  }
  return leray_project(sp, std::move(r));
}

/// Mode-wise exp(-nu |xi|^2 dt) factors.
inline std::vector<double> integrating_factor(const Spectral& sp, double nu, double dt) {
  const auto& m = sp.modes();
  std::vector<double> e(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) e[k] = std::exp(-nu * m.xi2[k] * dt);
  return e;
}

/// Predictor of the integrating-factor Heun scheme: E (u + dt k1).
inline SpectralField if_predict(const SpectralField& u, const SpectralField& k1, const std::vector<double>& e,
                                double dt) {
  SpectralField out(u.box(), u.components(), no_init);
  for (int a = 0; a < u.components(); ++a) {
    auto o = out[a];
    auto uu = u[a];
    auto kk = k1[a];
    for (std::size_t k = 0; k < o.size(); ++k) o[k] = e[k] * (uu[k] + dt * kk[k]);
  }
  return out;
}

/// Corrector: E (u + dt/2 k1) + dt/2 k2.
inline SpectralField if_correct(const SpectralField& u, const SpectralField& k1, const SpectralField& k2,
                                const std::vector<double>& e, double dt) {
  SpectralField out(u.box(), u.components(), no_init);
  const double h = 0.5 * dt;
  for (int a = 0; a < u.components(); ++a) {
    auto o = out[a];
    auto uu = u[a];
    auto k1a = k1[a];
    auto k2a = k2[a];
    for (std::size_t k = 0; k < o.size(); ++k) o[k] = e[k] * (uu[k] + h * k1a[k]) + h * k2a[k];
  }
  return out;
}

/// One integrating-factor RK2 (Heun) step of the forced Navier-Stokes
/// equations with the forcing h held fixed over the step. `h == nullptr`
/// means no forcing at all.
inline VelocityField ns_step(const Spectral& sp, const VelocityField& u, const RealField* h, double dt, double nu) {
  if (!(dt > 0.0)) throw std::invalid_argument("ns_step: dt must be positive");
  std::optional<SpectralField> hs;
  if (h) hs = sp.forward(*h);
  const SpectralField* f = hs ? &*hs : nullptr;
  const auto e = integrating_factor(sp, nu, dt);
  const SpectralField k1 = fluid_rhs(sp, u, f);
  const VelocityField u1 = VelocityField::from_spectral(sp, if_predict(u.spectral(), k1, e, dt));
  const SpectralField k2 = fluid_rhs(sp, u1, f);
  SpectralField next = if_correct(u.spectral(), k1, k2, e, dt);
  if (!next.all_finite()) throw NumericalError("ns_step: non-finite velocity after step");
  return VelocityField::from_spectral(sp, std::move(next));
}

/// Pressure with zero mean from Delta P = -div(u . grad u) + div h.
inline RealField pressure_solve(const Spectral& sp, const VelocityField& u, const RealField* h) {
  const auto& m = sp.modes();
  const SpectralField nl = nonlinear_term(sp, u);
  std::optional<SpectralField> hs;
  if (h) hs = sp.forward(*h);
  SpectralField P(sp.box(), 1);
  const Complex I{0.0, 1.0};
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m.xi2[k] == 0.0 || m.nyquist[k]) continue;
    Complex s{};
    for (int a = 0; a < u.dim(); ++a) {
      Complex g = nl[a][k];
      if (hs) g -= (*hs)[a][k];
      s += m.xi[k][a] * g;
    }
    P[0][k] = I * s / m.xi2[k];
  }
  return sp.inverse(P);
}

/// Weighted spectral sum L^d * sum w |F|^2 over modes accepted by `keep`.
template <typename Keep>
double spectral_sum(const Spectral& sp, const SpectralField& F, Keep&& keep) {
  const auto& m = sp.modes();
  double s = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (!keep(k)) continue;
    double a2 = 0.0;
    for (int a = 0; a < F.components(); ++a) a2 += std::norm(F[a][k]);
    s += m.weight[k] * a2;
  }
  return s * sp.box().volume();
}

/// 1/2 ||u||^2_{L^2}.
inline double kinetic_energy(const Spectral& sp, const VelocityField& u) {
  return 0.5 * spectral_sum(sp, u.spectral(), [](std::size_t) { return true; });
}

/// ||grad u||^2_{L^2} = sum |xi|^2 |u_hat|^2 (Plancherel).
inline double dissipation_rate(const Spectral& sp, const VelocityField& u) {
  const auto& m = sp.modes();
  const auto& F = u.spectral();
  double s = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    double a2 = 0.0;
    for (int a = 0; a < F.components(); ++a) a2 += std::norm(F[a][k]);
    s += m.weight[k] * m.xi2[k] * a2;
  }
  return s * sp.box().volume();
}

/// Integral of |u_hat|^2 over the closed ball |xi| <= r. In box units this is
/// sum_{|xi|<=r} |u_hat(xi)|^2 (2 pi / L)^d with the continuum transform, which
/// reduces to L^d sum |c_k|^2 with the normalized coefficients used here.
inline double low_freq_energy(const Spectral& sp, const VelocityField& u, double r) {
  if (r < 0.0) throw std::invalid_argument("low_freq_energy: radius must be >= 0");
  const auto& m = sp.modes();
  const double r2 = r * r * (1.0 + 1e-12);
  return spectral_sum(sp, u.spectral(), [&](std::size_t k) { return m.xi2[k] <= r2; });
}

/// Physical-space quadrature 1/2 sum |u|^2 dx^d.
inline double kinetic_energy_quadrature(const RealField& u) {
  double s = 0.0;
  for (int a = 0; a < u.components(); ++a)
    for (double v : u[a]) s += v * v;
  return 0.5 * s * u.box().cell_volume();
}

}  // namespace csns
