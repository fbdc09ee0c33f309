// End-to-end acceptance runs. Prints one PASS/FAIL line per criterion.
//   acceptance <configs dir> <scratch dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "csns/cli.hpp"
#include "csns/csns.hpp"

namespace fs = std::filesystem;
using namespace csns;

namespace {

struct Outcome {
  std::string name;
  std::vector<DiagnosticRecord> rows;
  RunSummary summary;
  SimState final_state;
  double seconds = 0.0;
};

std::vector<Outcome> g_runs;  // every simulation, for the cross-run properties; reserved, never reallocated
int g_failed = 0;

void line(const char* id, bool pass, const std::string& detail) {
  std::printf("%-5s %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failed;
}

template <typename... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

const Outcome& simulate(const std::string& name, const SimConfig& cfg, const RunOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r = run(cfg, opt);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  g_runs.push_back({name, std::move(r.records), r.summary, std::move(r.final_state), s});
  return g_runs.back();
}

// In-memory copy of a config file: no output directory, no checkpoints.
SimConfig load(const fs::path& dir, const char* file) {
  SimConfig c = parse_config((dir / file).string());
  c.output.dir.clear();
  c.output.snapshot_interval = 0.0;
  c.output.checkpoint_interval = 0.0;
  return c;
}

const DiagnosticRecord* row_at(const std::vector<DiagnosticRecord>& rows, double t) {
  for (const auto& r : rows)
    if (std::abs(r.t - t) < 1e-9) return &r;
  return nullptr;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Names of the regular files in a directory, sorted.
std::vector<std::string> listing(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

// Empty when the two directories hold byte-identical files; else the first mismatch.
std::string compare_dirs(const fs::path& a, const fs::path& b) {
  const auto la = listing(a);
  if (la != listing(b)) return "file lists differ";
  for (const auto& f : la)
    if (slurp(a / f) != slurp(b / f)) return f;
  return {};
}

double min_fs_ratio(const std::vector<DiagnosticRecord>& rows) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& r : rows)
    if (r.e > 0.0) worst = std::min(worst, r.fs_residual / r.e);
  return worst;
}

struct Drift {
  double l1 = 0.0;  // relative to sum w
  double l2 = 0.0;
  double linf = 0.0;
};

Drift density_drift(const Outcome& o) {
  Drift d;
  const auto& r0 = o.rows.front();
  const double mass = o.summary.mass0;
  for (const auto& r : o.rows) {
    d.l1 = std::max(d.l1, std::abs(r.rho_l1 - mass) / mass);
    d.l2 = std::max(d.l2, std::abs(r.rho_l2 - r0.rho_l2) / r0.rho_l2);
    d.linf = std::max(d.linf, std::abs(r.rho_linf - r0.rho_linf) / r0.rho_linf);
  }
  return d;
}

// u = U + TG(x - U t, t) on the 2 pi box with nu = 1.
RealField boosted_vortex(const BoxSpec& box, const Vec3& U, double t) {
  return sample_field(box, 2, [&](const Vec3& x) {
    const double a = std::exp(-2.0 * t), X = x[0] - U[0] * t, Y = x[1] - U[1] * t;
    return Vec3{U[0] + a * std::sin(X) * std::cos(Y), U[1] - a * std::cos(X) * std::sin(Y), 0.0};
  });
}

}  // namespace

int main(int argc, char** argv) {
  keep_heap_pages();
  g_runs.reserve(32);
  const fs::path configs = argc > 1 ? fs::path(argv[1]) : fs::path("configs");
  const fs::path scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "csns_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  // Main coupled run: 128^2, 10k particles, dt 1e-3, t = 10, with file output.
  SimConfig main_cfg = parse_config((configs / "coupled_2d.json").string());
  main_cfg.output.dir = (scratch / "coupled_2d").string();
  const Outcome& main_run = simulate("coupled_2d", main_cfg);
  const auto main_rows = main_run.rows;
  const RunSummary main_sum = main_run.summary;
  const double main_seconds = main_run.seconds;

  // AC1
  {
    const bool exact = main_sum.mass == main_sum.mass0 && main_run.final_state.ens.total_mass() == main_sum.mass0;
    const bool fast = main_seconds < 60.0;
    line("AC1", exact && fast && main_sum.steps == 10000,
         fmt("sum w %s over %llu steps (%.17g); runtime %.1f s, limit 60 s", exact ? "bit-identical" : "CHANGED",
             (unsigned long long)main_sum.steps, main_sum.mass, main_seconds));
  }

  // AC2: residual at t = 5, then the same run with dt halved.
  {
    const DiagnosticRecord* r5 = row_at(main_rows, 5.0);
    SimConfig half = load(configs, "coupled_2d.json");
    half.dt = 0.5e-3;
    half.t_end = 5.0;
    const Outcome& h = simulate("coupled_2d_half_dt", half);
    const double e0 = main_rows.front().e;
    const double a = r5 ? std::abs(r5->ledger_residual) / e0 : INFINITY;
    const double b = std::abs(h.rows.back().ledger_residual) / h.rows.front().e;
    const double ratio = a / b;
    line("AC2", a <= 1e-2 && ratio >= 3.0,
         fmt("|residual|/E0 at t=5: %.3e (dt=1e-3), %.3e (dt=5e-4); reduction %.2fx, need >= 3", a, b, ratio));
  }

  // AC3: Taylor-Green energy, and the temporal order on the drifting vortex.
  {
    const SimConfig tg = load(configs, "taylor_green_2d.json");
    const Outcome& o = simulate("taylor_green_2d", tg);
    double err = 0.0;
    for (const auto& r : o.rows) {
      const double ref = oracle::taylor_green_energy(r.t, tg.viscosity);
      err = std::max(err, std::abs(r.e - ref) / ref);
    }
    const Model md(tg.box, tg.kernel, 1.0);
    const Vec3 U{0.6, -0.35, 0.0};
    std::vector<double> errs;
    for (double dt : {4e-3, 2e-3, 1e-3}) {
      SimState s;
      s.u = VelocityField::from_physical(md.sp, boosted_vortex(tg.box, U, 0.0));
      s.ens.dim = 2;
      const long n = std::lround(1.0 / dt);
      for (long i = 0; i < n; ++i) s = coupled_step(md, s, dt);
      const RealField ex = boosted_vortex(tg.box, U, 1.0);
      double e = 0.0;
      for (std::size_t i = 0; i < ex.raw().size(); ++i) e = std::max(e, std::abs(s.u.physical().raw()[i] - ex.raw()[i]));
      errs.push_back(e);
    }
    const double p1 = std::log2(errs[0] / errs[1]);
    const double p2 = std::log2(errs[1] / errs[2]);
    const bool ok = err <= 1e-6 && std::abs(p1 - 2.0) <= 0.2 && std::abs(p2 - 2.0) <= 0.2;
    line("AC3", ok, fmt("max rel energy error %.2e (limit 1e-6); order %.3f, %.3f (dt 4e-3/2e-3/1e-3)", err, p1, p2));
  }

  // AC4: kinetic oracles with u = 0 and phi = 1.
  {
    const KernelSpec one{KernelKind::constant, 0.0, 1.0};
    const BoxSpec box8{2, 2.0 * std::numbers::pi, 8};
    const Model md(box8, one, 1.0);
    const Vec3 v1{1.0, 0.5, 0.0};
    const Vec3 v2{-0.2, 0.4, 0.0};
    const auto two = integrate_characteristics(md, two_particle_ensemble(2, 0.3, 0.7, v1, v2, box8.length), 1.0, 1e-5);
    const auto [x1, x2] = oracle::two_particle_solution(0.3, 0.7, v1, v2, 1.0);
    double ea = 0.0;
    for (int a = 0; a < 2; ++a)
      ea = std::max({ea, std::abs(two.velocity[0][a] - x1[a]), std::abs(two.velocity[1][a] - x2[a])});

    std::mt19937_64 rng(7);
    ParticleInit pi;
    pi.kind = ParticleProfile::uniform_ball;
    ParticleEnsemble ens = sample_initial(box8, pi, 512, 1.0, rng);
    const oracle::MomentState m0{ens.total_mass(), ens.momentum(), ens.second_moment()};
    ens = integrate_characteristics(md, ens, 2.0, 1e-3);
    const auto ex = oracle::moment_ode_solution(m0, 2.0);
    const double e1 = norm(ens.momentum() - ex.m1) / norm(ex.m1);
    const double e2 = std::abs(ens.second_moment() - ex.m2) / ex.m2;
    line("AC4", ea <= 1e-8 && e1 <= 1e-4 && e2 <= 1e-4,
         fmt("(a) two-particle abs error %.2e (limit 1e-8); (b) M1 rel %.2e, M2 rel %.2e (limit 1e-4)", ea, e1, e2));
  }

  // Remaining runs, before the cross-run properties.
  const Outcome& heat = simulate("heat_limit_2d", load(configs, "heat_limit_2d.json"));
  const double heat_fs = min_fs_ratio(heat.rows);

  const SimConfig d3 = load(configs, "decay_3d.json");
  const Outcome& decay = simulate("decay_3d", d3);
  std::vector<double> dt_, de, du;
  for (const auto& r : decay.rows) {
    dt_.push_back(r.t);
    de.push_back(r.e);
    du.push_back(std::sqrt(2.0 * r.e_fluid));
  }
  const double t_valid = validity_time(d3.box.length, d3.viscosity);

  SimConfig coarse = load(configs, "lattice_2d.json");
  SimConfig fine = coarse;
  fine.box.n *= 2;
  fine.particle_count *= 4;  // same particles per cell
  fine.dt *= 0.5;
  const Drift dc = density_drift(simulate("lattice_2d", coarse));
  const Drift dfn = density_drift(simulate("lattice_2d_fine", fine));
  const bool mass_c = g_runs[g_runs.size() - 2].summary.mass == g_runs[g_runs.size() - 2].summary.mass0;
  const bool mass_f = g_runs.back().summary.mass == g_runs.back().summary.mass0;

  // Determinism: two seeded runs with snapshots and checkpoints, and a restart.
  SimConfig det = parse_config((configs / "coupled_2d.json").string());
  det.box.n = 64;
  det.particle_count = 2000;
  det.t_end = 1.0;
  det.output.diagnostics_interval = 0.05;
  det.output.snapshot_interval = 0.5;
  det.output.checkpoint_interval = 0.4;
  std::string det_issue;
  {
    // Same output path for both, since checkpoints record the configuration.
    det.output.dir = (scratch / "det").string();
    simulate("determinism_a", det);
    fs::rename(scratch / "det", scratch / "det_a");
    simulate("determinism_b", det);
    fs::rename(scratch / "det", scratch / "det_b");
    det_issue = compare_dirs(scratch / "det_a", scratch / "det_b");
    if (det_issue.empty()) {
      RunOptions opt;
      opt.restart = (scratch / "det_a" / "checkpoint_000001.csck").string();
      simulate("determinism_restart", det, opt);
      fs::rename(scratch / "det", scratch / "det_restart");
      for (const char* f : {"diagnostics.csv", "snapshot_000002.csns"})
        if (slurp(scratch / "det_a" / f) != slurp(scratch / "det_restart" / f)) det_issue = std::string("restart ") + f;
    }
  }

  // AC5: per-step energy monotonicity in every run.
  {
    double worst = 0.0;
    std::string where;
    for (const auto& o : g_runs)
      if (o.summary.max_energy_increase >= worst) {
        worst = o.summary.max_energy_increase;
        where = o.name;
      }
    line("AC5", worst <= 1e-10,
         fmt("max per-step relative increase %.3e in %zu runs (worst: %s), limit 1e-10", worst, g_runs.size(),
             where.c_str()));
  }

  // AC6
  {
    const double main_fs = min_fs_ratio(main_rows);
    line("AC6", heat_fs >= -1e-4 && main_fs >= -1e-4,
         fmt("min residual/E: (a) heat limit %.3e, (b) coupled %.3e; limit -1e-4", heat_fs, main_fs));
  }

  // AC7
  {
    const DecayFit fe = fit_decay_exponent(dt_, de, 5.0, 50.0, t_valid);
    const DecayFit fu = fit_decay_exponent(dt_, du, 5.0, 50.0, t_valid);
    const bool ok = fe.slope >= -1.8 && fe.slope <= -1.2 && fu.slope >= -0.9 && fu.slope <= -0.6;
    line("AC7", ok,
         fmt("E slope %.3f in [-1.8,-1.2]; |u| slope %.3f in [-0.9,-0.6]; %zu samples on [5,50], t_valid %.0f; %.1f s",
             fe.slope, fu.slope, fe.samples, t_valid, decay.seconds));
  }

  // AC8
  {
    const double g0 = main_rows.front().alignment_gap;
    const double g1 = main_rows.back().alignment_gap;
    double t_star = 0.0;
    for (std::size_t i = 1; i < main_rows.size(); ++i)
      if (main_rows[i].alignment_gap > main_rows[i - 1].alignment_gap) t_star = main_rows[i].t;
    line("AC8", g1 <= 1e-2 * g0 && t_star <= 5.0,
         fmt("gap(10)/gap(0) = %.3e (limit 1e-2); non-increasing from t = %.2f (limit 5)", g1 / g0, t_star));
  }

  // AC9: per-step and per-row bounds in every run.
  {
    double r_worst = 0.0, c_worst = INFINITY;
    for (const auto& o : g_runs) {
      std::vector<BoundSample> h;
      for (const auto& r : o.rows) {
        h.push_back({r.t, r.r, r.b_inf, r.u_inf});
        c_worst = std::min(c_worst, cauchy_margin(r.b_inf, r.rho_l1, r.e_kinetic));
      }
      r_worst = std::min({r_worst, r_bound_check(h), o.summary.min_r_margin});
      c_worst = std::min(c_worst, o.summary.min_cauchy_margin);
    }
    line("AC9", r_worst >= -1e-3 && c_worst >= -1e-10,
         fmt("min R-bound margin %.3e (limit -1e-3); min Cauchy margin %.3e (limit -1e-10)", r_worst, c_worst));
  }

  // AC10
  {
    const double k2 = dc.l2 / dfn.l2;
    const double ki = dc.linf / dfn.linf;
    const bool l1 = mass_c && mass_f && dc.l1 <= 1e-13 && dfn.l1 <= 1e-13;
    line("AC10", l1 && k2 >= 2.0 && ki >= 2.0,
         fmt("L1: sum w bit-identical, grid L1 - sum w <= %.1e rel; L2 drift %.3e -> %.3e (%.1fx), Linf %.3e -> %.3e "
             "(%.1fx), need >= 2x",
             std::max(dc.l1, dfn.l1), dc.l2, dfn.l2, k2, dc.linf, dfn.linf, ki));
  }

  // AC11
  line("AC11", det_issue.empty(),
       det_issue.empty() ? std::string("two seeded runs byte-identical (csv, snapshots, checkpoints); restart reproduces "
                                       "csv and final snapshot")
                         : "mismatch: " + det_issue);

  std::printf("%d of 11 criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
