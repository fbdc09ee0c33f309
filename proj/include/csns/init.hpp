#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "csns/config.hpp"
#include "csns/spectral.hpp"

namespace csns {

namespace detail {

/// Random complex coefficients (unit-variance Gaussian per component) on the
/// modes selected by `keep`, projected and scaled to rms speed `amplitude`.
template <typename Keep>
VelocityField random_modes(const Spectral& sp, double amplitude, std::mt19937_64& rng, Keep&& keep) {
  const auto& m = sp.modes();
  const int d = sp.box().dim;
  SpectralField F(sp.box(), d);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t k = 0; k < m.size(); ++k) {
    // Draw for every mode so the stream does not depend on the selection.
    std::array<Complex, 3> c{};
    for (int a = 0; a < d; ++a) c[a] = Complex(g(rng), g(rng));
    if (m.xi2[k] == 0.0 || m.nyquist[k] || m.dealias[k] || !keep(k)) continue;
    // The symmetrizing round trip below averages a zero-plane mode with its
    // conjugate partner and halves its variance; pre-scale to compensate.
    const double s = m.mode[k][d - 1] == 0 ? std::numbers::sqrt2 : 1.0;
    for (int a = 0; a < d; ++a) F[a][k] = s * c[a];
  }
  // The last-axis zero plane holds each mode and its conjugate; a round trip
  // through physical space makes that plane Hermitian.
  F = sp.forward(sp.inverse(F));
  F = leray_project(sp, std::move(F));
  const double ms = spectral_sum(sp, F, [](std::size_t) { return true; }) / sp.box().volume();
  if (ms > 0.0) {
    const double s = amplitude / std::sqrt(ms);
    for (auto& v : F.raw()) v *= s;
  }
  return VelocityField::from_spectral(sp, std::move(F));
}

}  // namespace detail

/// Initial fluid velocity for a validated configuration. Coordinates are
/// scaled by 2 pi / L so every profile is periodic on the box.
inline VelocityField initial_velocity(const Spectral& sp, const FluidInit& init, std::mt19937_64& rng) {
  const BoxSpec& box = sp.box();
  const double k = 2.0 * std::numbers::pi / box.length;
  const double A = init.amplitude;
  switch (init.kind) {
    case FluidProfile::zero:
      return VelocityField::zero(sp);
    case FluidProfile::uniform:
      return VelocityField::from_physical(sp, sample_field(box, box.dim, [&](const Vec3&) { return init.velocity; }));
    case FluidProfile::shear:
      return VelocityField::from_physical(
          sp, sample_field(box, box.dim, [&](const Vec3& x) { return Vec3{A * std::sin(k * x[1]), 0.0, 0.0}; }));
    case FluidProfile::taylor_green:
      return VelocityField::from_physical(sp, sample_field(box, box.dim, [&](const Vec3& x) {
                                            const double cz = box.dim == 3 ? std::cos(k * x[2]) : 1.0;
                                            return Vec3{A * std::sin(k * x[0]) * std::cos(k * x[1]) * cz,
                                                        -A * std::cos(k * x[0]) * std::sin(k * x[1]) * cz, 0.0};
                                          }));
    case FluidProfile::random_smooth: {
      const double km = init.k_max;
      const auto& m = sp.modes();
      return detail::random_modes(sp, A, rng, [&](std::size_t i) {
        const auto& md = m.mode[i];
        return double(md[0] * md[0] + md[1] * md[1] + md[2] * md[2]) <= km * km;
      });
    }
    case FluidProfile::flat_spectrum: {
      const double r2 = init.xi_max * init.xi_max;
      const auto& m = sp.modes();
      return detail::random_modes(sp, A, rng, [&](std::size_t i) { return m.xi2[i] <= r2; });
    }
  }
  return VelocityField::zero(sp);
}

}  // namespace csns
