#pragma once

#include <optional>
#include <vector>

#include "csns/config.hpp"
#include "csns/particles.hpp"
#include "csns/spectral.hpp"

namespace csns {

/// The pair (f, u) at time t.
struct SimState {
  double t = 0.0;
  std::uint64_t step_index = 0;
  VelocityField u;
  ParticleEnsemble ens;
};

/// Read-only operators shared by every step of one run.
struct Model {
  Spectral sp;
  KernelTransform kt;
  double nu = 1.0;
  bool coupling = true;
  DepositMode mode = DepositMode::deterministic;

  explicit Model(const SimConfig& cfg)
      : sp(cfg.box), kt(sp, cfg.kernel), nu(cfg.viscosity), coupling(cfg.coupling_enabled),
        mode(cfg.determinism_mode ? DepositMode::deterministic : DepositMode::fast) {}
  Model(const BoxSpec& box, const KernelSpec& k, double nu_, bool coupling_ = true)
      : sp(box), kt(sp, k), nu(nu_), coupling(coupling_) {}

  const BoxSpec& box() const { return sp.box(); }
};

/// Everything one stage of the coupled scheme needs from a state: the
/// transfer stencils, moments and convolutions, u at the particles, the
/// particle and fluid tendencies, and the three dissipation rates.
struct StageEval {
  std::vector<CicStencil> stencils;
  MomentFields moments;
  std::vector<Vec3> u_at;
  ParticleRates rates;
  std::optional<SpectralField> forcing;  // transformed drag field h
  SpectralField fluid_rhs;
  double grad_rate = 0.0;   // nu ||grad u||^2
  double drag_rate = 0.0;   // sum w |V - u(X)|^2 when coupled, else 0
  double align_rate = 0.0;  // sum_i sum_j w_i w_j phi_ij |V_i - V_j|^2
  double gap = 0.0;         // sum w |V - u(X)|^2
};

/// A predictor stage (`full` false) only needs the tendencies: c_e and the
/// three rates are skipped and left zero.
inline StageEval evaluate_stage(const Model& md, const VelocityField& u, const ParticleEnsemble& ens,
                                bool full = true) {
  const BoxSpec& box = md.box();
  StageEval ev;
  const std::size_t np = ens.size();
  std::vector<double> gap_i, align_i;
  if (np > 0) {
    ev.stencils = cic_stencils(box, ens.position);
    ev.moments = interaction_fields(ens, ev.stencils, md.kt, md.sp, md.mode, full);
    ev.u_at.resize(np);
    ev.rates.dx.resize(np);
    ev.rates.dv.resize(np);
    const auto& m = ev.moments;
    if (!full) {
      parallel_for(np, [&](std::size_t i) {
        const auto& st = ev.stencils[i];
        const Vec3& v = ens.velocity[i];
        const Vec3 ua = interpolate(u.physical(), st);
        const double a = interpolate_scalar(m.a, st);
        const Vec3 b = interpolate(m.b, st);
        ev.u_at[i] = ua;
        ev.rates.dx[i] = ua;
        ev.rates.dv[i] = md.coupling ? (b - a * v) + (ua - v) : b - a * v;
      });
    }
    gap_i.resize(full ? np : 0);
    align_i.resize(full ? np : 0);
    if (full) parallel_for(np, [&](std::size_t i) {
      const auto& st = ev.stencils[i];
      const Vec3& v = ens.velocity[i];
      const Vec3 ua = interpolate(u.physical(), st);
      const double a = interpolate_scalar(m.a, st);
      const Vec3 b = interpolate(m.b, st);
      const double ce = interpolate_scalar(m.ce, st);
      ev.u_at[i] = ua;
      ev.rates.dx[i] = ua;
      ev.rates.dv[i] = md.coupling ? (b - a * v) + (ua - v) : b - a * v;
      gap_i[i] = ens.weight[i] * norm2(v - ua);
      align_i[i] = ens.weight[i] * (a * norm2(v) - 2.0 * dot(b, v) + ce);
    });
    if (md.coupling) ev.forcing = md.sp.forward(drag_field(ens, ev.stencils, ev.u_at, box, md.mode));
  } else {
    auto& m = ev.moments;
    m.rho = RealField(box, 1);
    m.j = RealField(box, box.dim);
    m.e = RealField(box, 1);
    m.a = RealField(box, 1);
    m.b = RealField(box, box.dim);
    m.ce = RealField(box, 1);
  }
  ev.fluid_rhs = fluid_rhs(md.sp, u, ev.forcing ? &*ev.forcing : nullptr);
  if (!full) return ev;
  ev.grad_rate = md.nu * dissipation_rate(md.sp, u);

  double gap = 0.0;
  double align = 0.0;
  for (std::size_t i = 0; i < np; ++i) {
    gap += gap_i[i];
    align += align_i[i];
  }
  ev.gap = gap;
  ev.drag_rate = md.coupling ? gap : 0.0;
  ev.align_rate = align;
  return ev;
}

}  // namespace csns
