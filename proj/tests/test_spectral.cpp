#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "csns/csns.hpp"

using namespace csns;

namespace {

constexpr double pi = std::numbers::pi;

BoxSpec tg_box(int n = 32) { return {2, 2.0 * pi, n}; }

double max_abs_diff(const RealField& a, const RealField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.raw().size(); ++i) m = std::max(m, std::abs(a.raw()[i] - b.raw()[i]));
  return m;
}

double max_abs(const RealField& a) {
  double m = 0.0;
  for (double v : a.raw()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs(const SpectralField& a) {
  double m = 0.0;
  for (const auto& v : a.raw()) m = std::max(m, std::abs(v));
  return m;
}

RealField random_field(const BoxSpec& box, int comps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  RealField f(box, comps);
  for (auto& v : f.raw()) v = g(rng);
  return f;
}

VelocityField random_velocity(const Spectral& sp, int k_max, double amp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FluidInit fi;
  fi.kind = FluidProfile::random_smooth;
  fi.amplitude = amp;
  fi.k_max = k_max;
  return initial_velocity(sp, fi, rng);
}

VelocityField tg_velocity(const Spectral& sp, double t = 0.0, double nu = 1.0) {
  const auto v = oracle::taylor_green_velocity(sp.box(), t, nu);
  RealField f(sp.box(), 2);
  std::copy(v.begin(), v.end(), f.raw().begin());
  return VelocityField::from_physical(sp, f, false);
}

}  // namespace

TEST(Transform, ConstantFieldHasOnlyMean) {
  const Spectral sp(tg_box(16));
  RealField f(sp.box(), 1);
  f.fill(2.5);
  const SpectralField F = sp.forward(f);
  EXPECT_NEAR(F[0][0].real(), 2.5, 1e-15);
  for (std::size_t k = 1; k < F.size(); ++k) EXPECT_LT(std::abs(F[0][k]), 1e-15);
}

TEST(Transform, SineIsTwoConjugateModes) {
  const Spectral sp({2, 3.0, 16});
  const double L = 3.0;
  RealField f = sample_field(sp.box(), 1, [&](const Vec3& x) { return Vec3{std::sin(2 * pi * x[0] / L), 0, 0}; });
  const SpectralField F = sp.forward(f);
  const auto& m = sp.modes();
  for (std::size_t k = 0; k < F.size(); ++k) {
    if (m.mode[k] == std::array<int, 3>{1, 0, 0}) {
      EXPECT_NEAR(F[0][k].imag(), -0.5, 1e-14);
      EXPECT_NEAR(F[0][k].real(), 0.0, 1e-14);
    } else if (m.mode[k] == std::array<int, 3>{-1, 0, 0}) {
      EXPECT_NEAR(F[0][k].imag(), 0.5, 1e-14);
    } else {
      EXPECT_LT(std::abs(F[0][k]), 1e-14);
    }
  }
}

TEST(Transform, RandomRoundTripAndParseval) {
  for (int dim : {2, 3}) {
    const Spectral sp({dim, 1.7, 16});
    const RealField f = random_field(sp.box(), 2, 11 + dim);
    const SpectralField F = sp.forward(f);
    const RealField g = sp.inverse(F);
    EXPECT_LT(max_abs_diff(f, g), 1e-12 * max_abs(f));
    const double phys = kinetic_energy_quadrature(f);
    const double spec = 0.5 * spectral_sum(sp, F, [](std::size_t) { return true; });
    EXPECT_NEAR(spec / phys, 1.0, 1e-12);
  }
}

TEST(Transform, ShapeMismatchThrows) {
  const Spectral sp(tg_box(16));
  const RealField f(tg_box(32), 1);
  EXPECT_THROW(sp.forward(f), std::invalid_argument);
  const SpectralField F(tg_box(8), 1);
  EXPECT_THROW(sp.inverse(F), std::invalid_argument);
}

TEST(Leray, GradientIsAnnihilated) {
  const Spectral sp(tg_box(16));
  // grad(sin x) = (cos x, 0)
  RealField g = sample_field(sp.box(), 2, [](const Vec3& x) { return Vec3{std::cos(x[0]), 0, 0}; });
  const SpectralField P = leray_project(sp, sp.forward(g));
  EXPECT_LT(max_abs(P), 1e-15);
}

TEST(Leray, DivergenceFreeUnchanged) {
  const Spectral sp(tg_box(16));
  RealField s = sample_field(sp.box(), 2, [](const Vec3& x) { return Vec3{std::sin(x[1]), 0, 0}; });
  const RealField back = sp.inverse(leray_project(sp, sp.forward(s)));
  EXPECT_LT(max_abs_diff(s, back), 1e-14);
}

TEST(Leray, ExtractsSolenoidalPartOfMixedField) {
  // (sin y + cos x, 0) = (sin y, 0) + grad(sin x); only the first survives.
  const Spectral sp(tg_box(16));
  RealField mixed = sample_field(sp.box(), 2, [](const Vec3& x) { return Vec3{std::sin(x[1]) + std::cos(x[0]), 0, 0}; });
  RealField sol = sample_field(sp.box(), 2, [](const Vec3& x) { return Vec3{std::sin(x[1]), 0, 0}; });
  const SpectralField P = leray_project(sp, sp.forward(mixed));
  EXPECT_LT(max_abs_diff(sp.inverse(P), sol), 1e-14);
  EXPECT_LE(divergence_defect(sp, P), 1e-14);
}

TEST(Leray, RandomOutputIsDivergenceFreeAndKeepsMean) {
  const Spectral sp({3, 2.0, 16});
  RealField f = random_field(sp.box(), 3, 5);
  const SpectralField F = sp.forward(f);
  const SpectralField P = leray_project(sp, F);
  EXPECT_LE(divergence_defect(sp, P), 1e-12);
  for (int a = 0; a < 3; ++a) EXPECT_EQ(P[a][0], F[a][0]);
  // idempotent
  const SpectralField PP = leray_project(sp, P);
  for (std::size_t i = 0; i < P.raw().size(); ++i) EXPECT_LT(std::abs(PP.raw()[i] - P.raw()[i]), 1e-15);
}

TEST(Nonlinear, ConstantAndShearGiveZero) {
  const Spectral sp(tg_box(16));
  RealField c(sp.box(), 2);
  c[0].front() = 0.0;
  std::fill(c[0].begin(), c[0].end(), 0.7);
  std::fill(c[1].begin(), c[1].end(), -0.2);
  EXPECT_LT(max_abs(nonlinear_term(sp, VelocityField::from_physical(sp, c))), 1e-15);
  RealField s = sample_field(sp.box(), 2, [](const Vec3& x) { return Vec3{std::sin(x[1]), 0, 0}; });
  EXPECT_LT(max_abs(nonlinear_term(sp, VelocityField::from_physical(sp, s))), 1e-15);
}

TEST(Nonlinear, TaylorGreenAdvectionIsGradient) {
  // u . grad u = (sin 2x, sin 2y) / 2 for the vortex; a pure gradient.
  const Spectral sp(tg_box(32));
  const VelocityField u = tg_velocity(sp);
  const SpectralField N = nonlinear_term(sp, u);
  RealField expect = sample_field(sp.box(), 2, [](const Vec3& x) {
    return Vec3{0.5 * std::sin(2 * x[0]), 0.5 * std::sin(2 * x[1]), 0};
  });
  EXPECT_LT(max_abs_diff(sp.inverse(N), expect), 1e-14);
  EXPECT_LT(max_abs(leray_project(sp, N)), 1e-15);
}

TEST(Nonlinear, DealiasedProductsAndOutput) {
  const Spectral sp({2, 2.0 * pi, 16});
  const VelocityField u = random_velocity(sp, 7, 1.0, 3);
  const SpectralField N = nonlinear_term(sp, u);
  const auto& m = sp.modes();
  for (std::size_t k = 0; k < m.size(); ++k)
    if (m.dealias[k])
      for (int a = 0; a < 2; ++a) EXPECT_EQ(N[a][k], Complex(0.0));
  // the projected advection does no work: int u . P(u . grad u) = 0
  const SpectralField PN = leray_project(sp, N);
  double work = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k)
    for (int a = 0; a < 2; ++a) {
      if (m.dealias[k]) continue;
      work += m.weight[k] * (std::conj(u.spectral()[a][k]) * PN[a][k]).real();
    }
  EXPECT_LT(std::abs(work), 1e-14);
}

TEST(Pressure, ConstantFlowHasNoPressure) {
  const Spectral sp(tg_box(16));
  RealField c(sp.box(), 2);
  std::fill(c[0].begin(), c[0].end(), 1.0);
  EXPECT_LT(max_abs(pressure_solve(sp, VelocityField::from_physical(sp, c), nullptr)), 1e-15);
}

TEST(Pressure, GradientForcingRecoversPotential) {
  const Spectral sp(tg_box(16));
  const VelocityField u = VelocityField::zero(sp);
  RealField h = sample_field(sp.box(), 2, [](const Vec3& x) { return Vec3{std::cos(x[0]), 0, 0}; });
  RealField expect = sample_field(sp.box(), 1, [](const Vec3& x) { return Vec3{std::sin(x[0]), 0, 0}; });
  EXPECT_LT(max_abs_diff(pressure_solve(sp, u, &h), expect), 1e-14);
}

TEST(Pressure, TaylorGreenVortex) {
  // Delta P = -div(u . grad u) = -(cos 2x + cos 2y), so P = +(cos 2x + cos 2y)/4.
  const Spectral sp(tg_box(32));
  const RealField P = pressure_solve(sp, tg_velocity(sp), nullptr);
  const auto ref = oracle::taylor_green_pressure(sp.box(), 0.0, 1.0);
  double err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) err = std::max(err, std::abs(P[0][i] - ref[i]));
  EXPECT_LT(err, 1e-14);
  double mean = 0.0;
  for (double v : P[0]) mean += v;
  EXPECT_LT(std::abs(mean) / double(ref.size()), 1e-16);
}

TEST(NsStep, ShearModeDecaysByExactFactor) {
  const Spectral sp(tg_box(16));
  const double nu = 0.3, dt = 0.01;
  RealField s = sample_field(sp.box(), 2, [](const Vec3& x) { return Vec3{std::sin(2 * x[1]), 0, 0}; });
  VelocityField u = VelocityField::from_physical(sp, s);
  double e = kinetic_energy(sp, u);
  for (int n = 0; n < 20; ++n) {
    u = ns_step(sp, u, nullptr, dt, nu);
    const double e1 = kinetic_energy(sp, u);
    EXPECT_NEAR(e1 / e, std::exp(-2 * nu * 4.0 * dt), 1e-13);
    e = e1;
  }
}

TEST(NsStep, ConstantFlowUnchanged) {
  const Spectral sp({3, 2.0, 8});
  RealField c(sp.box(), 3);
  std::fill(c[0].begin(), c[0].end(), 0.4);
  std::fill(c[2].begin(), c[2].end(), -1.1);
  const VelocityField u = VelocityField::from_physical(sp, c);
  const VelocityField v = ns_step(sp, u, nullptr, 0.1, 1.0);
  EXPECT_LT(max_abs_diff(u.physical(), v.physical()), 1e-15);
}

TEST(NsStep, TaylorGreenAmplitude) {
  const Spectral sp(tg_box(32));
  VelocityField u = tg_velocity(sp);
  const double dt = 1e-3;
  for (int n = 0; n < 1000; ++n) u = ns_step(sp, u, nullptr, dt, 1.0);
  const auto ref = oracle::taylor_green_velocity(sp.box(), 1.0, 1.0);
  double err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) err = std::max(err, std::abs(u.physical().raw()[i] - ref[i]));
  EXPECT_LT(err, 1e-12);
  EXPECT_NEAR(kinetic_energy(sp, u) / oracle::taylor_green_energy(1.0, 1.0), 1.0, 1e-12);
}

TEST(NsStep, SecondOrderOnBoostedVortex) {
  // A uniform drift makes the vortex a non-trivial test of the time stepper:
  // u = U + TG(x - U t, t).
  const Spectral sp(tg_box(32));
  const Vec3 U{0.6, -0.35, 0};
  const double T = 0.5;
  auto exact = [&](double t) {
    return sample_field(sp.box(), 2, [&](const Vec3& x) {
      const double a = std::exp(-2 * t), X = x[0] - U[0] * t, Y = x[1] - U[1] * t;
      return Vec3{U[0] + a * std::sin(X) * std::cos(Y), U[1] - a * std::cos(X) * std::sin(Y), 0};
    });
  };
  std::vector<double> errs;
  for (double dt : {0.02, 0.01, 0.005}) {
    VelocityField u = VelocityField::from_physical(sp, exact(0.0));
    const int n = int(std::lround(T / dt));
    for (int i = 0; i < n; ++i) u = ns_step(sp, u, nullptr, dt, 1.0);
    errs.push_back(max_abs_diff(u.physical(), exact(T)));
  }
  for (int i = 0; i + 1 < 3; ++i) {
    const double order = std::log2(errs[i] / errs[i + 1]);
    EXPECT_NEAR(order, 2.0, 0.2) << "dt level " << i;
  }
}

TEST(NsStep, InvariantsOnRandomFlow) {
  const Spectral sp({2, 2.0 * pi, 32});
  VelocityField u = random_velocity(sp, 5, 1.0, 17);
  const SpectralField u0 = u.spectral();
  double e = kinetic_energy(sp, u);
  for (int n = 0; n < 50; ++n) {
    u = ns_step(sp, u, nullptr, 2e-3, 0.05);
    EXPECT_LE(divergence_defect(sp, u.spectral()), 1e-10);
    const double e1 = kinetic_energy(sp, u);
    EXPECT_LE(e1, e + 1e-12);
    e = e1;
    for (int a = 0; a < 2; ++a) EXPECT_EQ(u.spectral()[a][0], u0[a][0]);
  }
  EXPECT_THROW(ns_step(sp, u, nullptr, 0.0, 1.0), std::invalid_argument);
}

TEST(NsStep, NonFiniteInputAborts) {
  const Spectral sp(tg_box(8));
  RealField f(sp.box(), 2);
  f[0][3] = std::numeric_limits<double>::infinity();
  const VelocityField u = VelocityField::from_physical(sp, f, false);
  EXPECT_THROW(ns_step(sp, u, nullptr, 1e-3, 1.0), NumericalError);
}

TEST(Energy, ZeroField) {
  const Spectral sp(tg_box(8));
  const VelocityField u = VelocityField::zero(sp);
  EXPECT_EQ(kinetic_energy(sp, u), 0.0);
  EXPECT_EQ(dissipation_rate(sp, u), 0.0);
}

TEST(Energy, SineXOnTwoPiBox) {
  // 1/2 int sin^2 x dx dy over [0, 2 pi)^2 = pi^2
  const Spectral sp(tg_box(16));
  RealField f = sample_field(sp.box(), 2, [](const Vec3& x) { return Vec3{std::sin(x[0]), 0, 0}; });
  const VelocityField u = VelocityField::from_physical(sp, f, false);
  EXPECT_NEAR(kinetic_energy(sp, u), pi * pi, 1e-12);
  EXPECT_NEAR(kinetic_energy(sp, u) / kinetic_energy_quadrature(f), 1.0, 1e-10);
  // single |xi| = 1 mode: ||grad u||^2 = 1 * ||u||^2
  EXPECT_NEAR(dissipation_rate(sp, u), 2 * kinetic_energy(sp, u), 1e-12);
}

TEST(Energy, QuadratureAgreesOnRandomFlow) {
  const Spectral sp({3, 5.0, 16});
  const VelocityField u = random_velocity(sp, 4, 0.8, 23);
  EXPECT_NEAR(kinetic_energy(sp, u) / kinetic_energy_quadrature(u.physical()), 1.0, 1e-10);
}

TEST(LowFreqEnergy, ShellsAndLimits) {
  const Spectral sp(tg_box(16));
  RealField f = sample_field(sp.box(), 2, [](const Vec3& x) { return Vec3{0.3 + std::sin(x[1]), 0, 0}; });
  const VelocityField u = VelocityField::from_physical(sp, f);
  const double total = 2 * kinetic_energy(sp, u);
  const double mean_part = 0.3 * 0.3 * sp.box().volume();
  EXPECT_NEAR(low_freq_energy(sp, u, 0.0), mean_part, 1e-12);
  EXPECT_NEAR(low_freq_energy(sp, u, 0.999), mean_part, 1e-12);
  EXPECT_NEAR(low_freq_energy(sp, u, 1.0), total, 1e-12);
  EXPECT_NEAR(low_freq_energy(sp, u, sp.modes().max_xi()), total, 1e-12);
  EXPECT_THROW(low_freq_energy(sp, u, -1.0), std::invalid_argument);
}

TEST(LowFreqEnergy, BoundedByTotal) {
  const Spectral sp({3, 4.0, 16});
  const VelocityField u = random_velocity(sp, 5, 1.0, 2);
  const double total = 2 * kinetic_energy(sp, u);
  double prev = 0.0;
  for (double r = 0.0; r < 30.0; r += 0.5) {
    const double v = low_freq_energy(sp, u, r);
    EXPECT_GE(v, prev);
    EXPECT_LE(v, total * (1 + 1e-14));
    prev = v;
  }
}

TEST(InitialVelocity, RandomModesHaveEqualVarianceOnZeroPlane) {
  // Per-mode energy must not depend on whether the mode sits in the
  // self-conjugate last-axis plane of the half spectrum.
  const Spectral sp(BoxSpec{3, 2.0 * std::numbers::pi, 16});
  const auto& m = sp.modes();
  double plane = 0.0, rest = 0.0;
  std::size_t n_plane = 0, n_rest = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto u = random_velocity(sp, 3, 1.0, seed);
    for (std::size_t k = 0; k < m.size(); ++k) {
      const auto& md = m.mode[k];
      if (m.xi2[k] == 0.0 || md[0] * md[0] + md[1] * md[1] + md[2] * md[2] > 9) continue;
      double a2 = 0.0;
      for (int a = 0; a < 3; ++a) a2 += std::norm(u.spectral()[a][k]);
      (md[2] == 0 ? plane : rest) += a2;
      ++(md[2] == 0 ? n_plane : n_rest);
    }
  }
  EXPECT_NEAR((plane / n_plane) / (rest / n_rest), 1.0, 0.05);
}
