#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "csns/geometry.hpp"
#include "csns/kernel.hpp"

namespace csns {

/// Thrown for invalid run descriptions; carries one message per violated
/// invariant, each prefixed with the offending key path.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> issues)
      : std::runtime_error(join(issues)), issues_(std::move(issues)) {}

  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid configuration:";
    for (const auto& i : v) s += "\n  " + i;
    return s;
  }
  std::vector<std::string> issues_;
};

enum class FluidProfile { zero, uniform, shear, taylor_green, random_smooth, flat_spectrum };
enum class ParticleProfile { gaussian_bump, uniform_ball, lattice_bump, flocked };

struct FluidInit {
  FluidProfile kind = FluidProfile::zero;
  double amplitude = 1.0;
  Vec3 velocity{0.0, 0.0, 0.0};  // uniform profile
  int k_max = 4;                  // random_smooth: shell cutoff in mode units
  double xi_max = 1.0;            // flat_spectrum: physical wavenumber cutoff

  bool operator==(const FluidInit&) const = default;
};

struct ParticleInit {
  ParticleProfile kind = ParticleProfile::gaussian_bump;
  std::optional<Vec3> center;      // defaults to the box centre
  std::optional<double> sigma_x;   // defaults to L/8
  std::optional<double> sigma_v;   // defaults to r0/2
  Vec3 velocity{0.0, 0.0, 0.0};    // mean drift, or the common velocity when flocked

  bool operator==(const ParticleInit&) const = default;
};

struct InitProfile {
  FluidInit fluid;
  ParticleInit particles;

  bool operator==(const InitProfile&) const = default;
};

struct OutputSpec {
  std::string dir;                   // empty: keep everything in memory
  double diagnostics_interval = 0.0; // 0: every step
  double snapshot_interval = 0.0;    // 0: disabled
  double checkpoint_interval = 0.0;  // 0: disabled
  bool jsonl = false;                // mirror the CSV series as JSON lines

  bool operator==(const OutputSpec&) const = default;
};

struct SimConfig {
  BoxSpec box;
  KernelSpec kernel;
  double viscosity = 1.0;
  std::int64_t particle_count = 0;
  double r0 = 1.0;
  InitProfile init_profile;
  double dt = 1e-3;
  bool adaptive_dt = false;
  double cfl = 0.5;
  double t_end = 1.0;
  std::uint64_t seed = 0;
  bool coupling_enabled = true;
  bool determinism_mode = true;
  OutputSpec output;

  bool operator==(const SimConfig&) const = default;
};

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// Every violated invariant of `cfg`, as "key.path: message".
inline std::vector<std::string> config_issues(const SimConfig& cfg) {
  std::vector<std::string> out;
  auto bad = [&](const std::string& path, const std::string& msg) { out.push_back(path + ": " + msg); };
  auto finite = [](double v) { return std::isfinite(v); };

  if (cfg.box.dim != 2 && cfg.box.dim != 3) bad("box.d", "dimension must be 2 or 3");
  if (!(cfg.box.length > 0.0) || !finite(cfg.box.length)) bad("box.L", "box length must be positive");
  if (cfg.box.n < 8 || !is_power_of_two(cfg.box.n)) bad("box.N", "N must be even power of two >= 8");

  if (!(cfg.kernel.amplitude > 0.0) || !finite(cfg.kernel.amplitude)) {
    bad("kernel.amplitude", "kernel must be positive");
  } else if (cfg.kernel.amplitude > 1.0) {
    bad("kernel.amplitude", "kernel values exceed the unit cap max{|phi|,|phi'|} <= 1");
  }
  if (cfg.kernel.kind == KernelKind::inverse_power) {
    if (!(cfg.kernel.beta >= 0.0) || !finite(cfg.kernel.beta)) {
      bad("kernel.beta", "exponent must be >= 0");
    } else if (max_abs_dphi(cfg.kernel) > 1.0) {
      bad("kernel.beta", "kernel derivative exceeds the unit cap max{|phi|,|phi'|} <= 1");
    }
  }

  if (!(cfg.viscosity > 0.0) || !finite(cfg.viscosity)) bad("viscosity", "must be positive");
  if (cfg.particle_count < 0) bad("particle_count", "must be >= 0");
  if (!(cfg.r0 > 0.0) || !finite(cfg.r0)) bad("r0", "initial velocity support radius must be positive");
  if (!(cfg.dt > 0.0) || !finite(cfg.dt)) bad("dt", "time step must be positive");
  if (!(cfg.cfl > 0.0 && cfg.cfl <= 1.0)) bad("cfl", "Courant factor must lie in (0, 1]");
  if (!(cfg.t_end >= 0.0) || !finite(cfg.t_end)) bad("t_end", "must be >= 0");

  const auto& fl = cfg.init_profile.fluid;
  if (!finite(fl.amplitude) || fl.amplitude < 0.0) bad("init_profile.fluid.amplitude", "must be >= 0");
  if (fl.kind == FluidProfile::random_smooth && fl.k_max < 1)
    bad("init_profile.fluid.k_max", "must be >= 1");
  if (fl.kind == FluidProfile::flat_spectrum && !(fl.xi_max > 0.0))
    bad("init_profile.fluid.xi_max", "must be positive");
  if (fl.kind == FluidProfile::taylor_green && cfg.box.dim == 2 &&
      std::abs(cfg.box.length - 2.0 * std::numbers::pi) > 1e-12)
    bad("init_profile.fluid.kind", "taylor_green requires L = 2*pi");

  const auto& pp = cfg.init_profile.particles;
  if (pp.sigma_x && !(*pp.sigma_x > 0.0)) bad("init_profile.particles.sigma_x", "must be positive");
  if (pp.sigma_v && !(*pp.sigma_v > 0.0)) bad("init_profile.particles.sigma_v", "must be positive");
  if (pp.kind == ParticleProfile::flocked && norm(pp.velocity) > cfg.r0)
    bad("init_profile.particles.velocity", "flocked velocity must lie inside B(r0)");
  if (pp.kind == ParticleProfile::lattice_bump && cfg.particle_count > 0) {
    const double root = std::round(std::pow(double(cfg.particle_count), 1.0 / cfg.box.dim));
    if (std::int64_t(ipow(root, cfg.box.dim)) != cfg.particle_count)
      bad("particle_count", "lattice_bump needs a perfect d-th power");
  }
  if (pp.kind != ParticleProfile::flocked && norm(pp.velocity) >= cfg.r0)
    bad("init_profile.particles.velocity", "mean drift must lie strictly inside B(r0)");

  const auto& o = cfg.output;
  if (o.diagnostics_interval < 0.0) bad("output.diagnostics_interval", "must be >= 0");
  if (o.snapshot_interval < 0.0) bad("output.snapshot_interval", "must be >= 0");
  if (o.checkpoint_interval < 0.0) bad("output.checkpoint_interval", "must be >= 0");
  if ((o.snapshot_interval > 0.0 || o.checkpoint_interval > 0.0) && o.dir.empty())
    bad("output.dir", "snapshots and checkpoints need an output directory");
  return out;
}

/// Fill defaults that depend on other fields, then check every invariant.
inline SimConfig validate_config(SimConfig cfg) {
  auto issues = config_issues(cfg);
  if (!issues.empty()) throw ConfigError(std::move(issues));
  auto& pp = cfg.init_profile.particles;
  if (!pp.center) {
    const double c = 0.5 * cfg.box.length;
    pp.center = Vec3{c, c, cfg.box.dim == 3 ? c : 0.0};
  }
  if (!pp.sigma_x) pp.sigma_x = cfg.box.length / 8.0;
  if (!pp.sigma_v) pp.sigma_v = 0.5 * cfg.r0;
  if (cfg.box.dim == 2) {
    (*pp.center)[2] = 0.0;
    pp.velocity[2] = 0.0;
    cfg.init_profile.fluid.velocity[2] = 0.0;
  }
  return cfg;
}

}  // namespace csns
