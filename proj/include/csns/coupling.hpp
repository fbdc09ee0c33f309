#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "csns/config.hpp"
#include "csns/diagnostics.hpp"
#include "csns/init.hpp"
#include "csns/state.hpp"

namespace csns {

/// One synchronized step of the coupled system. Fluid and particles share the
/// two Heun stages: each stage deposits moments, convolves a and b, forms h
/// from the particles' relative velocity, and evaluates both tendencies on
/// the same frozen stage state. `ev0` must be the evaluation of `s`.
/// Returns the new state together with its own evaluation, which the caller
/// can reuse as the next step's first stage. `factor` may hold a precomputed
/// integrating_factor(md.sp, md.nu, dt).
inline std::pair<SimState, StageEval> coupled_step(const Model& md, const SimState& s, const StageEval& ev0, double dt,
                                                   const std::vector<double>* factor = nullptr) {
  if (!(dt > 0.0)) throw std::invalid_argument("coupled_step: dt must be positive");
  const BoxSpec& box = md.box();
  std::vector<double> own;
  if (!factor) own = integrating_factor(md.sp, md.nu, dt);
  const auto& e = factor ? *factor : own;

  const VelocityField u1 = VelocityField::from_spectral(md.sp, if_predict(s.u.spectral(), ev0.fluid_rhs, e, dt));
  const ParticleEnsemble p1 = advance_particles(s.ens, ev0.rates, dt, box);
  const StageEval ev1 = evaluate_stage(md, u1, p1, false);

  SimState next;
  next.t = s.t + dt;
  next.step_index = s.step_index + 1;
  SpectralField uh = if_correct(s.u.spectral(), ev0.fluid_rhs, ev1.fluid_rhs, e, dt);
  if (!uh.all_finite()) throw NumericalError("coupled_step: non-finite fluid velocity at t = " + std::to_string(next.t));
  next.u = VelocityField::from_spectral(md.sp, std::move(uh));
  next.ens = combine_particles(s.ens, ev0.rates, ev1.rates, dt, box);
  check_finite(next.ens, "coupled_step");
  StageEval ev = evaluate_stage(md, next.u, next.ens);
  return {std::move(next), std::move(ev)};
}

inline SimState coupled_step(const Model& md, const SimState& s, double dt) {
  return coupled_step(md, s, evaluate_stage(md, s.u, s.ens), dt).first;
}

/// cfl * min(dx / max(||u||_inf, eps), 1).
inline double adaptive_dt(const BoxSpec& box, const VelocityField& u, double cfl) {
  const double umax = std::max(sup_norm(u.physical()), 1e-12);
  return cfl * std::min(box.dx() / umax, 1.0);
}

/// Same, additionally capped by the time left to the next output and to t_end.
inline double adaptive_dt(const SimState& s, double cfl, double next_output, double t_end) {
  const BoxSpec& box = s.u.physical().box();
  double dt = adaptive_dt(box, s.u, cfl);
  if (next_output > s.t) dt = std::min(dt, next_output - s.t);
  if (t_end > s.t) dt = std::min(dt, t_end - s.t);
  return dt;
}

/// int u dx + sum w V.
inline Vec3 total_momentum(const SimState& s) {
  const auto& uh = s.u.spectral();
  const double vol = uh.box().volume();
  Vec3 m{};
  for (int a = 0; a < uh.components(); ++a) m[a] = vol * uh[a][0].real();
  return m + s.ens.momentum();
}

/// Build the initial state of a validated configuration.
inline SimState initial_state(const Model& md, const SimConfig& cfg, std::mt19937_64& rng) {
  SimState s;
  s.u = initial_velocity(md.sp, cfg.init_profile.fluid, rng);
  s.ens = sample_initial(cfg.box, cfg.init_profile.particles, cfg.particle_count, cfg.r0, rng);
  return s;
}

/// Worst-case summaries of the per-step checks.
struct RunSummary {
  double max_energy_increase = 0.0;  // max over steps of (E_{n+1} - E_n) / E_n
  double min_r_margin = 0.0;         // velocity-support bound, per-step quadrature
  double min_cauchy_margin = std::numeric_limits<double>::infinity();
  double min_equivalence_margin = std::numeric_limits<double>::infinity();  // at outputs
  double mass0 = 0.0;
  double mass = 0.0;
  std::uint64_t steps = 0;
};

/// Run bookkeeping beyond (f, u) needed to continue a run bit-identically.
struct RunTrack {
  EnergyLedger ledger;
  double tw_drag_cum = 0.0;
  double r_integral = 0.0;  // int (||b||_inf + ||u||_inf)
  double r0 = 0.0;          // v-support radius at t = 0
  double rho0_inf = 0.0;
  RunSummary summary;
  std::uint64_t diag_count = 0;  // outputs emitted after the initial one
  std::uint64_t snap_count = 0;
  std::uint64_t ckpt_count = 0;
  std::vector<DiagnosticRecord> pending;  // rows still waiting for dE/dt neighbours
  std::vector<DiagnosticRecord> history;  // finalized rows
};

/// Time loop with diagnostics. Output rows are finalized once the
/// neighbours needed for the centered dE/dt exist.
class Simulation {
 public:
  using RecordSink = std::function<void(const DiagnosticRecord&)>;
  using StateSink = std::function<void(const Simulation&)>;

  explicit Simulation(const SimConfig& cfg) : cfg_(validate_config(cfg)), md_(cfg_), rng_(cfg_.seed) {
    state_ = initial_state(md_, cfg_, rng_);
    ev_ = evaluate_stage(md_, state_.u, state_.ens);
    const EnergyParts e = energy(md_.sp, state_);
    track_.ledger.start(e.total);
    track_.r0 = v_support_radius(state_.ens);
    track_.rho0_inf = state_.ens.empty() ? 0.0 : sup_abs(ev_.moments.rho);
    track_.summary.mass0 = track_.summary.mass = state_.ens.total_mass();
    bu_ = b_inf() + u_inf();
    started_ = false;
  }

  /// Resume from saved state and bookkeeping.
  Simulation(const SimConfig& cfg, SimState state, RunTrack track, const std::string& rng_state)
      : cfg_(validate_config(cfg)), md_(cfg_), state_(std::move(state)), track_(std::move(track)) {
    std::istringstream in(rng_state);
    in >> rng_;
    ev_ = evaluate_stage(md_, state_.u, state_.ens);
    bu_ = b_inf() + u_inf();
    started_ = true;
  }

  void on_record(RecordSink f) { record_sink_ = std::move(f); }
  void on_snapshot(StateSink f) { snapshot_sink_ = std::move(f); }
  void on_checkpoint(StateSink f) { checkpoint_sink_ = std::move(f); }
  void set_last_checkpoint(std::string path) { last_checkpoint_ = std::move(path); }

  const SimConfig& config() const { return cfg_; }
  const Model& model() const { return md_; }
  const SimState& state() const { return state_; }
  const StageEval& eval() const { return ev_; }
  const RunTrack& track() const { return track_; }
  const RunSummary& summary() const { return track_.summary; }
  const std::vector<DiagnosticRecord>& records() const { return track_.history; }
  std::string rng_state() const {
    std::ostringstream out;
    out << rng_;
    return out.str();
  }

  /// Emit t = 0 outputs; a no-op after the first call and after a restore.
  void start() {
    if (started_) return;
    started_ = true;
    push_record();
    if (cfg_.output.snapshot_interval > 0.0 && snapshot_sink_) snapshot_sink_(*this);
  }

  bool done() const {
    if (cfg_.adaptive_dt) return state_.t >= cfg_.t_end;
    return state_.step_index >= fixed_steps();
  }

  void step() {
    start();
    const double dt = next_dt();
    if (dt != factor_dt_) {
      factor_ = integrating_factor(md_.sp, md_.nu, dt);
      factor_dt_ = dt;
    }
    const EnergyParts e0 = energy(md_.sp, state_);
    const DissipationRates r0 = dissipation_terms(ev_);
    const double t0 = state_.t;
    const double drag0 = ev_.drag_rate;
    std::pair<SimState, StageEval> next;
    try {
      next = coupled_step(md_, state_, ev_, dt, &factor_);
    } catch (const NumericalError& err) {
      flush();
      throw NumericalError(std::string(err.what()) + "; last good checkpoint: " +
                           (last_checkpoint_.empty() ? std::string("none") : last_checkpoint_));
    }
    state_ = std::move(next.first);
    ev_ = std::move(next.second);
    if (!cfg_.adaptive_dt) {
      state_.t = state_.step_index >= fixed_steps() ? cfg_.t_end : double(state_.step_index) * cfg_.dt;
    }
    const double t1 = state_.t;
    const EnergyParts e1 = energy(md_.sp, state_);
    const DissipationRates r1 = dissipation_terms(ev_);
    track_.ledger.advance(dt, r0, r1, e1.total);
    track_.tw_drag_cum += 0.5 * dt * (time_weight(t0) * drag0 + time_weight(t1) * ev_.drag_rate);

    auto& sm = track_.summary;
    const double binf = b_inf();
    const double bu1 = binf + u_inf();
    track_.r_integral += 0.5 * dt * (bu_ + bu1);
    bu_ = bu1;
    sm.min_r_margin = std::min(sm.min_r_margin, track_.r0 + track_.r_integral - v_support_radius(state_.ens));
    sm.min_cauchy_margin = std::min(sm.min_cauchy_margin, cauchy_margin(binf, state_.ens.total_mass(), e1.kinetic));
    if (e0.total > 0.0) sm.max_energy_increase = std::max(sm.max_energy_increase, (e1.total - e0.total) / e0.total);
    sm.mass = state_.ens.total_mass();
    sm.steps = state_.step_index;

    const bool last = done();
    if (due(cfg_.output.diagnostics_interval, track_.diag_count, true) || last) {
      if (cfg_.output.diagnostics_interval > 0.0) track_.diag_count = count_at(cfg_.output.diagnostics_interval);
      push_record();
    }
    if (cfg_.output.snapshot_interval > 0.0 && due(cfg_.output.snapshot_interval, track_.snap_count, false)) {
      track_.snap_count = count_at(cfg_.output.snapshot_interval);
      if (snapshot_sink_) snapshot_sink_(*this);
    }
    if (last) flush();
    if (cfg_.output.checkpoint_interval > 0.0 && due(cfg_.output.checkpoint_interval, track_.ckpt_count, false)) {
      track_.ckpt_count = count_at(cfg_.output.checkpoint_interval);
      if (checkpoint_sink_) checkpoint_sink_(*this);
    }
  }

  /// Step to t_end and finalize every output row.
  void run() {
    start();
    while (!done()) step();
    flush();
  }

  /// Finalize pending rows using one-sided differences at the tail.
  void flush() {
    auto& p = track_.pending;
    if (p.empty()) return;
    std::vector<DiagnosticRecord> all;
    const std::size_t keep = std::min<std::size_t>(2, track_.history.size());
    all.insert(all.end(), track_.history.end() - keep, track_.history.end());
    all.insert(all.end(), p.begin(), p.end());
    for (std::size_t i = keep; i < all.size(); ++i) {
      finalize(all, i);
      emit(all[i]);
    }
    p.clear();
  }

  std::uint64_t fixed_steps() const {
    if (cfg_.t_end <= 0.0) return 0;
    return std::uint64_t(std::ceil(cfg_.t_end / cfg_.dt - 1e-9));
  }

 private:
  static double sup_abs(const RealField& f) {
    double m = 0.0;
    for (double v : f.raw()) m = std::max(m, std::abs(v));
    return m;
  }
  double b_inf() const { return state_.ens.empty() ? 0.0 : sup_norm(ev_.moments.b); }
  double u_inf() const { return sup_norm(state_.u.physical()); }

  double next_dt() const {
    if (!cfg_.adaptive_dt) {
      const std::uint64_t n = fixed_steps();
      if (state_.step_index + 1 < n) return cfg_.dt;
      const double rest = cfg_.t_end - double(state_.step_index) * cfg_.dt;
      return std::abs(rest - cfg_.dt) <= 1e-9 * cfg_.dt ? cfg_.dt : rest;
    }
    double next_out = cfg_.t_end;
    if (cfg_.output.diagnostics_interval > 0.0)
      next_out = std::min(next_out, double(track_.diag_count + 1) * cfg_.output.diagnostics_interval);
    return adaptive_dt(state_, cfg_.cfl, next_out, cfg_.t_end);
  }

  double tol() const { return 1e-9 * (cfg_.adaptive_dt ? std::max(cfg_.cfl, 1e-3) : cfg_.dt); }

  /// True once t passed the next multiple of `interval` after `count` events.
  bool due(double interval, std::uint64_t count, bool every_step_if_zero) const {
    if (interval <= 0.0) return every_step_if_zero;
    return state_.t >= double(count + 1) * interval - tol();
  }
  std::uint64_t count_at(double interval) const {
    return std::uint64_t(std::floor((state_.t + tol()) / interval));
  }

  DiagnosticRecord make_record() const {
    DiagnosticRecord r;
    const EnergyParts e = energy(md_.sp, state_);
    r.t = state_.t;
    r.e = e.total;
    r.e_fluid = e.fluid;
    r.e_kinetic = e.kinetic;
    r.grad_rate = ev_.grad_rate;
    r.drag_rate = ev_.drag_rate;
    r.align_rate = ev_.align_rate;
    r.ledger_residual = energy_identity_residual(track_.ledger);
    r.r = v_support_radius(state_.ens);
    r.b_inf = b_inf();
    r.u_inf = u_inf();
    const double ps[3] = {1.0, 2.0, p_infinity};
    const auto lp = density_lp_norms(ev_.moments.rho, ps);
    r.rho_l1 = lp[0];
    r.rho_l2 = lp[1];
    r.rho_linf = lp[2];
    r.momentum = total_momentum(state_);
    r.lowfreq_energy = low_freq_energy(md_.sp, state_.u, splitting_radius(state_.t, splitting_c2(track_.rho0_inf)));
    r.alignment_gap = ev_.gap;
    r.tw_drag_cum = track_.tw_drag_cum;
    return r;
  }

  void push_record() {
    DiagnosticRecord r = make_record();
    auto& sm = track_.summary;
    sm.min_equivalence_margin =
        std::min(sm.min_equivalence_margin, equivalence_margin(r.e, r.e_fluid, r.alignment_gap, track_.rho0_inf));
    track_.pending.push_back(r);
    // A row is final once it has a successor and two earlier neighbours exist in total.
    auto& p = track_.pending;
    while (p.size() >= 2) {
      const std::size_t have = track_.history.size() + p.size();
      if (have < 3) break;
      std::vector<DiagnosticRecord> all;
      const std::size_t keep = std::min<std::size_t>(2, track_.history.size());
      all.insert(all.end(), track_.history.end() - keep, track_.history.end());
      all.insert(all.end(), p.begin(), p.end());
      finalize(all, keep);
      emit(all[keep]);
      p.erase(p.begin());
    }
  }

  /// Fill fs_residual of all[i] from its neighbours in `all`.
  void finalize(std::vector<DiagnosticRecord>& all, std::size_t i) const {
    const std::size_t n = all.size();
    double dedt;
    if (n == 1) {
      dedt = -(all[i].grad_rate + all[i].drag_rate + 0.5 * all[i].align_rate);
    } else if (n == 2) {
      dedt = (all[1].e - all[0].e) / (all[1].t - all[0].t);
    } else {
      const std::size_t c = i == 0 ? 1 : (i == n - 1 ? n - 2 : i);
      const double tt[3] = {all[c - 1].t, all[c].t, all[c + 1].t};
      const double ff[3] = {all[c - 1].e, all[c].e, all[c + 1].e};
      dedt = quadratic_derivative(tt, ff, all[i].t);
    }
    const double c2 = splitting_c2(track_.rho0_inf);
    all[i].fs_residual = fourier_splitting_residual(all[i].t, all[i].e, dedt, all[i].lowfreq_energy, c2);
  }

  void emit(const DiagnosticRecord& r) {
    track_.history.push_back(r);
    if (record_sink_) record_sink_(r);
  }

  SimConfig cfg_;
  Model md_;
  std::mt19937_64 rng_;
  SimState state_;
  StageEval ev_;
  RunTrack track_;
  double bu_ = 0.0;
  std::vector<double> factor_;
  double factor_dt_ = 0.0;
  bool started_ = false;
  std::string last_checkpoint_;
  RecordSink record_sink_;
  StateSink snapshot_sink_;
  StateSink checkpoint_sink_;
};

}  // namespace csns
