#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <memory>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include "csns/geometry.hpp"

namespace csns {

using Complex = std::complex<double>;

/// Non-finite values appeared during a step.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Allocator whose value-less construct is a no-op, so vector(n) and resize
/// leave trivially destructible elements uninitialized.
template <typename T>
struct uninit_allocator : std::allocator<T> {
  static_assert(std::is_trivially_destructible_v<T>);
  using value_type = T;
  template <typename U>
  struct rebind {
    using other = uninit_allocator<U>;
  };
  uninit_allocator() = default;
  template <typename U>
  uninit_allocator(const uninit_allocator<U>&) noexcept {}
  template <typename U>
  void construct(U*) noexcept {}
  template <typename U, typename... A>
  void construct(U* p, A&&... a) {
    ::new (static_cast<void*>(p)) U(std::forward<A>(a)...);
  }
};

}  // namespace detail

/// Tag for fields whose every sample is written before it is read.
struct NoInit {};
inline constexpr NoInit no_init{};

/// Grid samples with one or more components, stored component-major.
template <typename T, bool Spectral>
class GridField {
 public:
  using Storage = std::vector<T, detail::uninit_allocator<T>>;

  GridField() = default;
  /// Zero-filled.
  GridField(const BoxSpec& box, int components)
      : box_(box), components_(components), stride_(Spectral ? box.spectral_points() : box.points()),
        data_(stride_ * components, T{}) {}
  /// Uninitialized samples.
  GridField(const BoxSpec& box, int components, NoInit)
      : box_(box), components_(components), stride_(Spectral ? box.spectral_points() : box.points()),
        data_(stride_ * components) {}

  const BoxSpec& box() const { return box_; }
  int components() const { return components_; }
  /// Samples (or modes) per component.
  std::size_t size() const { return stride_; }
  bool empty() const { return data_.empty(); }

  std::span<T> operator[](int c) { return {data_.data() + c * stride_, stride_}; }
  std::span<const T> operator[](int c) const { return {data_.data() + c * stride_, stride_}; }

  Storage& raw() { return data_; }
  const Storage& raw() const { return data_; }

  bool same_shape(const GridField& o) const {
    return box_ == o.box_ && components_ == o.components_;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (const T& v : data_) {
      if constexpr (Spectral) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
      } else {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  bool operator==(const GridField&) const = default;

 private:
  BoxSpec box_{};
  int components_ = 0;
  std::size_t stride_ = 0;
  Storage data_;
};

using RealField = GridField<double, false>;
using SpectralField = GridField<Complex, true>;

/// Pointwise vector magnitude |f(x)| at a flat index.
inline double magnitude_at(const RealField& f, std::size_t i) {
  double s = 0.0;
  for (int c = 0; c < f.components(); ++c) s += f[c][i] * f[c][i];
  return std::sqrt(s);
}

/// Grid sup of the pointwise magnitude.
inline double sup_norm(const RealField& f) {
  // sqrt is monotone and correctly rounded, so one root at the end gives the same value.
  double m = 0.0;
  const std::size_t n = f.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int c = 0; c < f.components(); ++c) s += f[c][i] * f[c][i];
    m = std::max(m, s);
  }
  return std::sqrt(m);
}

/// Grid quadrature of each component.
inline std::vector<double> grid_integral(const RealField& f) {
  std::vector<double> out(f.components(), 0.0);
  const double dv = f.box().cell_volume();
  for (int c = 0; c < f.components(); ++c) {
    double s = 0.0;
    for (double v : f[c]) s += v;
    out[c] = s * dv;
  }
  return out;
}

/// Sample a callable f(Vec3) -> Vec3 (first `components` entries used) on the grid.
template <typename F>
RealField sample_field(const BoxSpec& box, int components, F&& fn) {
  RealField out(box, components);
  for (std::size_t i = 0; i < box.points(); ++i) {
    const Vec3 v = fn(node_position(box, i));
    for (int c = 0; c < components; ++c) out[c][i] = v[c];
  }
  return out;
}

}  // namespace csns
