#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace csns {

/// Three slots are always stored; in 2D the last one stays zero.
using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm2(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// x^n for small non-negative integer n, by repeated multiplication.
inline double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

/// Periodic cube [0, length)^dim sampled with n points per axis.
struct BoxSpec {
  int dim = 3;
  double length = 2.0 * std::numbers::pi;
  int n = 64;

  std::size_t points() const { return dim == 2 ? std::size_t(n) * n : std::size_t(n) * n * n; }
  /// Number of stored modes in the real-to-complex (half) layout.
  std::size_t spectral_points() const {
    const std::size_t half = std::size_t(n) / 2 + 1;
    return dim == 2 ? std::size_t(n) * half : std::size_t(n) * n * half;
  }
  double dx() const { return length / n; }
  double cell_volume() const { return ipow(dx(), dim); }
  double volume() const { return ipow(length, dim); }

  bool operator==(const BoxSpec&) const = default;
};

/// Row-major flat index, last axis fastest.
inline std::size_t flat_index(const BoxSpec& box, int i, int j, int k = 0) {
  if (box.dim == 2) return std::size_t(i) * box.n + j;
  return (std::size_t(i) * box.n + j) * box.n + k;
}

/// Integer node coordinates of a flat physical index.
inline std::array<int, 3> node_of(const BoxSpec& box, std::size_t flat) {
  const std::size_t n = box.n;
  if (box.dim == 2) return {int(flat / n), int(flat % n), 0};
  return {int(flat / (n * n)), int((flat / n) % n), int(flat % n)};
}

inline Vec3 node_position(const BoxSpec& box, std::size_t flat) {
  const auto ijk = node_of(box, flat);
  const double h = box.dx();
  return {ijk[0] * h, ijk[1] * h, box.dim == 3 ? ijk[2] * h : 0.0};
}

/// Wrap a coordinate into [0, length).
inline double wrap_coordinate(double x, double length) {
  if (x >= 0.0 && x < length) return x;
  double r = (x >= length && x < 2.0 * length) ? x - length : std::fmod(x, length);
  if (r < 0.0) r += length;
  if (r >= length) r = 0.0;
  return r;
}

inline Vec3 wrap_position(const BoxSpec& box, Vec3 x) {
  for (int a = 0; a < box.dim; ++a) x[a] = wrap_coordinate(x[a], box.length);
  return x;
}

/// Minimal-image separation along one axis.
inline double minimal_image(double d, double length) {
  d = std::fmod(d, length);
  if (d > 0.5 * length) d -= length;
  if (d < -0.5 * length) d += length;
  return d;
}

inline double periodic_distance(const BoxSpec& box, const Vec3& a, const Vec3& b) {
  double s = 0.0;
  for (int c = 0; c < box.dim; ++c) {
    const double d = minimal_image(a[c] - b[c], box.length);
    s += d * d;
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Wavenumbers

/// Signed mode number stored at transform index i: 0, 1, ..., n/2, -n/2+1, ..., -1.
inline int mode_of_index(int i, int n) { return i <= n / 2 ? i : i - n; }
inline int index_of_mode(int m, int n) { return m >= 0 ? m : m + n; }

/// Physical wavenumbers 2*pi*mode/L of one full axis, in transform order.
inline std::vector<double> axis_wavenumbers(int n, double length) {
  std::vector<double> k(n);
  const double base = 2.0 * std::numbers::pi / length;
  for (int i = 0; i < n; ++i) k[i] = base * mode_of_index(i, n);
  return k;
}

/// Per-mode tables over the half-spectrum layout used by the real transforms.
///
/// Leading axes run over all n indices, the last axis over 0..n/2 only. The
/// `weight` column counts each stored mode together with its implied
/// conjugate partner, so sum(weight * |c|^2) is the full-spectrum sum.
struct WavenumberGrid {
  BoxSpec box;
  std::vector<std::array<int, 3>> mode;  // signed mode numbers
  std::vector<Vec3> xi;                  // physical wavenumbers
  std::vector<double> xi2;               // |xi|^2
  std::vector<double> weight;            // 1 or 2
  std::vector<unsigned char> nyquist;    // any index equals n/2
  std::vector<unsigned char> dealias;    // any |mode| > n/3 (2/3 rule)

  std::size_t size() const { return xi2.size(); }
  double max_xi() const {
    double m = 0.0;
    for (double v : xi2) m = std::max(m, v);
    return std::sqrt(m);
  }
};

inline WavenumberGrid wavenumbers(const BoxSpec& box) {
  WavenumberGrid g;
  g.box = box;
  const int n = box.n;
  const int half = n / 2 + 1;
  const double base = 2.0 * std::numbers::pi / box.length;
  const std::size_t count = box.spectral_points();
  g.mode.reserve(count);
  g.xi.reserve(count);
  g.xi2.reserve(count);
  g.weight.reserve(count);
  g.nyquist.reserve(count);
  g.dealias.reserve(count);
  const int lead0 = n;
  const int lead1 = box.dim == 3 ? n : 1;
  for (int i = 0; i < lead0; ++i) {
    for (int j = 0; j < lead1; ++j) {
      for (int k = 0; k < half; ++k) {
        std::array<int, 3> m{};
        std::array<int, 3> idx{};
        if (box.dim == 2) {
          m = {mode_of_index(i, n), k, 0};
          idx = {i, k, 0};
        } else {
          m = {mode_of_index(i, n), mode_of_index(j, n), k};
          idx = {i, j, k};
        }
        Vec3 xi{base * m[0], base * m[1], base * m[2]};
        bool nyq = false;
        bool cut = false;
        for (int a = 0; a < box.dim; ++a) {
          nyq = nyq || (idx[a] == n / 2);
          cut = cut || (3 * std::abs(m[a]) > n);
        }
        g.mode.push_back(m);
        g.xi.push_back(xi);
        g.xi2.push_back(norm2(xi));
        g.weight.push_back((k == 0 || k == n / 2) ? 1.0 : 2.0);
        g.nyquist.push_back(nyq ? 1 : 0);
        g.dealias.push_back(cut ? 1 : 0);
      }
    }
  }
  return g;
}

}  // namespace csns
