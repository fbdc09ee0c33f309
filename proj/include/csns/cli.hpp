#pragma once

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "csns/coupling.hpp"
#include "csns/diagnostics.hpp"
#include "csns/io.hpp"
#include "csns/oracle.hpp"

namespace csns {

struct CheckResult {
  std::string name;
  double worst = 0.0;      // worst observed value of the checked quantity
  double tolerance = 0.0;  // threshold it is compared with
  bool pass = true;
  std::string note;
};

inline void print_checks(std::ostream& os, const std::vector<CheckResult>& checks) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %-24s %-12s %s\n", "check", "worst", "limit", "status");
  os << buf;
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "%-28s %-24.12g %-12.3g %s", c.name.c_str(), c.worst, c.tolerance,
                  c.pass ? "PASS" : "FAIL");
    os << buf << (c.note.empty() ? "" : "  (" + c.note + ")") << "\n";
  }
}

inline bool all_pass(const std::vector<CheckResult>& checks) {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

/// Replay a diagnostic series through every inequality the run should obey.
inline std::vector<CheckResult> verify_series(const std::vector<DiagnosticRecord>& rows) {
  std::vector<CheckResult> out;
  if (rows.empty()) return out;
  const double e0 = rows.front().e;
  const double escale = std::max(e0, 1e-300);
  const double rho0_inf = rows.front().rho_linf;

  {
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, std::abs(r.rho_l1 - rows.front().rho_l1));
    out.push_back({"mass_conservation", worst, 1e-12, worst <= 1e-12 * std::max(1.0, rows.front().rho_l1), ""});
  }
  {
    double worst = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i - 1].e > 0.0) worst = std::max(worst, (rows[i].e - rows[i - 1].e) / rows[i - 1].e);
    out.push_back({"energy_non_increasing", worst, 1e-10, worst <= 1e-10, "relative increase between rows"});
  }
  {
    double worst = 0.0;
    for (const auto& r : rows) worst = std::min({worst, r.grad_rate, r.drag_rate, r.align_rate});
    out.push_back({"dissipation_nonnegative", worst / escale, -1e-12, worst >= -1e-12 * escale, "relative to E0"});
  }
  {
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, std::abs(r.ledger_residual));
    out.push_back({"energy_identity", worst / escale, 1e-2, worst <= 1e-2 * escale, "|residual| / E0"});
  }
  {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) worst = std::min(worst, r.e > 0.0 ? r.fs_residual / r.e : 0.0);
    out.push_back({"fourier_splitting", worst, -1e-4, worst >= -1e-4, "residual / E(t)"});
  }
  {
    std::vector<BoundSample> h;
    for (const auto& r : rows) h.push_back({r.t, r.r, r.b_inf, r.u_inf});
    const double m = r_bound_check(h);
    out.push_back({"velocity_support_bound", m, -1e-3, m >= -1e-3, "trapezoid at output cadence"});
  }
  {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) worst = std::min(worst, cauchy_margin(r.b_inf, r.rho_l1, r.e_kinetic));
    out.push_back({"b_cauchy_bound", worst, -1e-10, worst >= -1e-10, "sqrt(2 mass E_kinetic) - ||b||_inf"});
  }
  {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) worst = std::min(worst, equivalence_margin(r.e, r.e_fluid, r.alignment_gap, rho0_inf));
    out.push_back({"energy_equivalence_bound", worst / escale, -1e-10, worst >= -1e-10 * escale,
                   "2(1+||rho0||_inf)(||u||^2+gap) - E"});
  }
  return out;
}

/// Checks on a snapshot file: header, finiteness, positivity of weights and
/// agreement of the stored density with the particle mass.
inline std::vector<CheckResult> verify_snapshot(const std::string& path) {
  std::vector<CheckResult> out;
  const Container c = read_snapshot(path);
  const std::string tag = std::filesystem::path(path).filename().string();
  const auto w = unpack_doubles(c.blob("w"));
  const auto rho = unpack_doubles(c.blob("rho"));
  double wmin = w.empty() ? 0.0 : w.front();
  double mass = 0.0;
  for (double x : w) {
    wmin = std::min(wmin, x);
    mass += x;
  }
  out.push_back({tag + ":weights_positive", wmin, 0.0, w.empty() || wmin > 0.0, ""});
  const BoxSpec box{int(c.header.dim), c.header.length, int(c.header.n)};
  double integral = 0.0;
  for (double x : rho) integral += x;
  integral *= box.cell_volume();
  const double err = std::abs(integral - mass);
  out.push_back({tag + ":density_mass", err, 1e-12, err <= 1e-12 * std::max(1.0, mass), ""});
  bool finite = true;
  for (const auto& [name, b] : c.blobs)
    for (double x : unpack_doubles(b)) finite = finite && std::isfinite(x);
  out.push_back({tag + ":finite", finite ? 0.0 : 1.0, 0.0, finite, ""});
  return out;
}

// ---------------------------------------------------------------------------
// Oracle cross-checks

inline ParticleEnsemble two_particle_ensemble(int dim, double w1, double w2, const Vec3& v1, const Vec3& v2,
                                              double length) {
  ParticleEnsemble e;
  e.dim = dim;
  e.position = {Vec3{0.1 * length, 0.2 * length, 0.0}, Vec3{0.6 * length, 0.7 * length, 0.0}};
  e.velocity = {v1, v2};
  e.weight = {w1, w2};
  return e;
}

/// Integrate the characteristics with u = 0 from t = 0 to t_end.
inline ParticleEnsemble integrate_characteristics(const Model& md, ParticleEnsemble ens, double t_end, double dt) {
  const VelocityField u = VelocityField::zero(md.sp);
  const long steps = std::lround(t_end / dt);
  for (long s = 0; s < steps; ++s) ens = characteristic_step(ens, md.kt, md.sp, u, dt, md.mode);
  return ens;
}

inline std::vector<CheckResult> oracle_suite() {
  std::vector<CheckResult> out;
  const KernelSpec one{KernelKind::constant, 0.0, 1.0};
  const BoxSpec box8{2, 2.0 * std::numbers::pi, 8};
  const Model md(box8, one, 1.0);

  {
    const Vec3 v1{1.0, 0.5, 0.0};
    const Vec3 v2{-0.2, 0.4, 0.0};
    const auto ens = integrate_characteristics(md, two_particle_ensemble(2, 0.3, 0.7, v1, v2, box8.length), 1.0, 1e-4);
    const auto [e1, e2] = oracle::two_particle_solution(0.3, 0.7, v1, v2, 1.0);
    const double err = std::max(norm(ens.velocity[0] - e1), norm(ens.velocity[1] - e2));
    out.push_back({"two_particle_closed_form", err, 1e-7, err <= 1e-7, "dt = 1e-4, t = 1"});
  }
  {
    std::mt19937_64 rng(7);
    ParticleInit pi;
    pi.kind = ParticleProfile::uniform_ball;
    ParticleEnsemble ens = sample_initial(box8, pi, 512, 1.0, rng);
    const oracle::MomentState m0{ens.total_mass(), ens.momentum(), ens.second_moment()};
    ens = integrate_characteristics(md, ens, 2.0, 1e-3);
    const auto ex = oracle::moment_ode_solution(m0, 2.0);
    const double e1 = norm(ens.momentum() - ex.m1) / norm(ex.m1);
    const double e2 = std::abs(ens.second_moment() - ex.m2) / ex.m2;
    out.push_back({"moment_ode_vs_particles", std::max(e1, e2), 1e-4, std::max(e1, e2) <= 1e-4, "N_p = 512, t = 2"});
  }
  {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-0.5, 0.5);
    std::uniform_real_distribution<double> X(0.0, box8.length);
    oracle::Particles p;
    for (int i = 0; i < 256; ++i) {
      p.x.push_back({X(rng), X(rng), 0.0});
      p.v.push_back({U(rng), U(rng), 0.0});
      p.w.push_back(1.0 / 256);
    }
    const auto m0 = oracle::moments_of(p);
    const auto pe = oracle::direct_nbody(box8, one, p, 1.0, 1e-3);
    const auto m1 = oracle::moments_of(pe);
    const auto ex = oracle::moment_ode_solution(m0, 1.0);
    const double err = std::max(norm(m1.m1 - ex.m1) / norm(ex.m1), std::abs(m1.m2 - ex.m2) / ex.m2);
    out.push_back({"moment_ode_vs_direct_nbody", err, 1e-8, err <= 1e-8, "N_p = 256, RK4"});
  }
  {
    const oracle::MomentState s0{1.0, {0.3, -0.2, 0.0}, 0.5};
    double worst = 0.0;
    for (double t : {0.1, 0.5, 1.0, 2.0}) {
      const double h = 1e-5;
      const auto a = oracle::moment_ode_solution(s0, t - h);
      const auto b = oracle::moment_ode_solution(s0, t + h);
      const auto [d1, d2] = oracle::moment_ode_rhs(oracle::moment_ode_solution(s0, t));
      worst = std::max(worst, std::abs((b.m2 - a.m2) / (2 * h) - d2));
      worst = std::max(worst, norm((1.0 / (2 * h)) * (b.m1 - a.m1) - d1));
    }
    out.push_back({"moment_closed_form_residual", worst, 1e-8, worst <= 1e-8, "finite differences"});
  }
  {
    const BoxSpec box{2, 2.0 * std::numbers::pi, 32};
    const Spectral sp(box);
    const auto tg = oracle::taylor_green_velocity(box, 0.0, 1.0);
    RealField f(box, 2);
    f.raw().assign(tg.begin(), tg.end());
    VelocityField u = VelocityField::from_physical(sp, f);
    for (int s = 0; s < 100; ++s) u = ns_step(sp, u, nullptr, 1e-3, 1.0);
    const double ref = oracle::taylor_green_energy(0.1, 1.0);
    const double err = std::abs(kinetic_energy(sp, u) - ref) / ref;
    out.push_back({"taylor_green_energy", err, 1e-10, err <= 1e-10, "32^2, t = 0.1"});
  }
  {
    double worst = 0.0;
    for (double t : {0.0, 1.0, 5.0, 50.0}) {
      const double a = oracle::flat_spectrum_energy(t, 1.0, 1.0);
      worst = std::max(worst, std::abs(a - oracle::flat_spectrum_energy_quadrature(t, 1.0, 1.0)) / a);
    }
    out.push_back({"flat_spectrum_closed_form", worst, 1e-10, worst <= 1e-10, "erf form vs Simpson"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Command line

/// Keep freed field buffers in the heap. By default glibc returns large
/// blocks to the system and every step pays for fresh zeroed pages.
inline void keep_heap_pages() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

inline int cli_main(int argc, char** argv) {
  keep_heap_pages();
  CLI::App app{"Coupled Cucker-Smale / Navier-Stokes simulator"};
  app.require_subcommand(1);

  std::string config_path, restart, out_dir;
  std::uint64_t seed = 0;
  bool deterministic = false;
  auto* run_cmd = app.add_subcommand("run", "run a configuration");
  run_cmd->add_option("config", config_path, "JSON configuration file");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "override the random seed");
  run_cmd->add_flag("--deterministic", deterministic, "force determinism_mode on");
  auto* dir_opt = run_cmd->add_option("--output-dir", out_dir, "override output.dir");
  run_cmd->add_option("--restart", restart, "resume from a checkpoint file");

  std::string csv_path;
  std::vector<std::string> snapshots;
  auto* verify_cmd = app.add_subcommand("verify", "check a diagnostic series against every invariant");
  verify_cmd->add_option("csv", csv_path, "diagnostics CSV")->required();
  verify_cmd->add_option("--snapshot", snapshots, "snapshot files to check");

  std::string fit_csv, column = "E";
  double t_from = 0.0, t_to = 0.0, fit_length = 0.0, fit_nu = 1.0;
  auto* fit_cmd = app.add_subcommand("fit-decay", "fit the decay exponent of a CSV column");
  fit_cmd->add_option("csv", fit_csv, "CSV file with a t column")->required();
  auto* from_opt = fit_cmd->add_option("--from", t_from, "window start");
  auto* to_opt = fit_cmd->add_option("--to", t_to, "window end");
  fit_cmd->add_option("--column", column, "column to fit (default E)");
  auto* len_opt = fit_cmd->add_option("--length", fit_length, "box side L; enables the validity-window check");
  fit_cmd->add_option("--viscosity", fit_nu, "viscosity for the validity window (default 1)");

  auto* oracle_cmd = app.add_subcommand("oracle-check", "run the oracle cross-validation suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run_cmd->parsed()) {
      if (config_path.empty() && restart.empty()) {
        std::cerr << "run: a config file or --restart is required\n";
        return 2;
      }
      SimConfig cfg;
      if (!config_path.empty()) cfg = parse_config(config_path);
      if (*seed_opt) cfg.seed = seed;
      if (deterministic) cfg.determinism_mode = true;
      if (*dir_opt) cfg.output.dir = out_dir;
      if (!restart.empty() && config_path.empty()) cfg.output = read_checkpoint(restart).config.output;
      if (!restart.empty() && *dir_opt) cfg.output.dir = out_dir;
      const RunResult res = run(cfg, {restart});
      const auto& s = res.summary;
      std::printf("steps %llu  t %.6g  rows %zu\n", (unsigned long long)s.steps, res.final_state.t, res.records.size());
      if (!res.records.empty()) {
        const auto& r = res.records.back();
        std::printf("E %.10g  ledger_residual %.3e  max step energy increase %.3e\n", r.e, r.ledger_residual,
                    s.max_energy_increase);
      }
      if (!cfg.output.dir.empty()) std::printf("output in %s\n", cfg.output.dir.c_str());
      return 0;
    }
    if (verify_cmd->parsed()) {
      auto checks = verify_series(records_from_table(read_csv(csv_path)));
      for (const auto& p : snapshots) {
        auto more = verify_snapshot(p);
        checks.insert(checks.end(), more.begin(), more.end());
      }
      print_checks(std::cout, checks);
      for (const auto& c : checks)
        if (!c.pass) std::cout << "violated invariant: " << c.name << "\n";
      return all_pass(checks) ? 0 : 1;
    }
    if (fit_cmd->parsed()) {
      const CsvTable t = read_csv(fit_csv);
      const auto ts = t.values("t");
      const auto ys = t.values(column);
      if (ts.empty()) throw IoError("no rows in " + fit_csv);
      const double a = *from_opt ? t_from : ts.front();
      const double b = *to_opt ? t_to : ts.back();
      std::optional<double> valid;
      if (*len_opt) valid = validity_time(fit_length, fit_nu);
      const DecayFit fit = fit_decay_exponent(ts, ys, a, b, valid);
      for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";
      std::printf("slope %.10g\nr2 %.10g\nsamples %zu\nwindow %.6g %.6g\n", fit.slope, fit.r2, fit.samples, a, b);
      return 0;
    }
    if (oracle_cmd->parsed()) {
      const auto checks = oracle_suite();
      print_checks(std::cout, checks);
      return all_pass(checks) ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace csns
