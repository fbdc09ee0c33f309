#pragma once

#include <cmath>
#include <string>
#include <string_view>

namespace csns {

enum class KernelKind { constant, inverse_power };

/// Communication weight phi(r) = amplitude * (1 + r^2)^(-beta/2); the
/// constant kind ignores beta.
struct KernelSpec {
  KernelKind kind = KernelKind::constant;
  double beta = 0.0;
  double amplitude = 1.0;

  bool operator==(const KernelSpec&) const = default;
};

struct KernelValue {
  double phi;
  double dphi;
};

inline KernelValue eval_phi(const KernelSpec& k, double r) {
  if (k.kind == KernelKind::constant || k.beta == 0.0) return {k.amplitude, 0.0};
  const double s = 1.0 + r * r;
  const double phi = k.amplitude * std::pow(s, -0.5 * k.beta);
  return {phi, -k.beta * r * phi / s};
}

/// sup_r |phi'(r)|, attained at r^2 = 1/(beta+1).
inline double max_abs_dphi(const KernelSpec& k) {
  if (k.kind == KernelKind::constant || k.beta == 0.0) return 0.0;
  const double r = 1.0 / std::sqrt(k.beta + 1.0);
  return std::abs(eval_phi(k, r).dphi);
}

inline std::string_view to_string(KernelKind kind) {
  return kind == KernelKind::constant ? "constant" : "inverse_power";
}

}  // namespace csns
