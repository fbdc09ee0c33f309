#pragma once

#include <fftw3.h>

#include <complex>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

#include "csns/field.hpp"

namespace csns {

namespace detail {
// The FFTW planner is not reentrant; execution on new arrays is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Real <-> half-complex multi-dimensional transforms for one box.
///
/// Forward coefficients are normalized by 1/N^d, so the inverse is a plain
/// sum: u(x) = sum_k c_k exp(i xi_k . x). Plans use FFTW_ESTIMATE, which picks
/// the same algorithm in every process; measured plans would not.
class Fft {
 public:
  explicit Fft(const BoxSpec& box) : box_(box) {
    std::vector<int> dims(box.dim, box.n);
    Buffer<double> r(box.points());
    Buffer<fftw_complex> c(box.spectral_points());
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c(box.dim, dims.data(), r.get(), c.get(), FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r(box.dim, dims.data(), c.get(), r.get(), FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
    if (!forward_ || !inverse_) throw std::runtime_error("FFTW planning failed");
  }
  ~Fft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  const BoxSpec& box() const { return box_; }

  SpectralField forward(const RealField& f) const {
    if (f.box() != box_) throw std::invalid_argument("forward_transform: shape mismatch");
    SpectralField out(box_, f.components(), no_init);
    const double norm = 1.0 / double(box_.points());
    const std::size_t m = box_.spectral_points();
    for (int c = 0; c < f.components(); ++c) {
      double* dst = reinterpret_cast<double*>(out[c].data());
      // r2c keeps its input, so field storage can be used directly whenever
      // its alignment class matches the planning arrays.
      const double* src = f[c].data();
      if (aligned(src) && aligned(dst)) {
        fftw_execute_dft_r2c(forward_, const_cast<double*>(src), reinterpret_cast<fftw_complex*>(dst));
        for (std::size_t k = 0; k < 2 * m; ++k) dst[k] *= norm;
        continue;
      }
      Scratch& sc = scratch();
      double* in = sc.real(box_.points());
      fftw_complex* spec = sc.spec(m);
      std::copy(f[c].begin(), f[c].end(), in);
      fftw_execute_dft_r2c(forward_, in, spec);
      const double* raw = &spec[0][0];
      for (std::size_t k = 0; k < 2 * m; ++k) dst[k] = raw[k] * norm;
    }
    return out;
  }

  RealField inverse(const SpectralField& F) const {
    if (F.box() != box_) throw std::invalid_argument("inverse_transform: shape mismatch");
    RealField out(box_, F.components(), no_init);
    Scratch& sc = scratch();
    fftw_complex* spec = sc.spec(box_.spectral_points());
    for (int c = 0; c < F.components(); ++c) {
      // c2r overwrites its input: always copy the coefficients
      std::copy(F[c].begin(), F[c].end(), reinterpret_cast<Complex*>(spec));
      double* dst = out[c].data();
      if (aligned(dst)) {
        fftw_execute_dft_c2r(inverse_, spec, dst);
        continue;
      }
      double* real = sc.real(box_.points());
      fftw_execute_dft_c2r(inverse_, spec, real);
      std::copy(real, real + box_.points(), dst);
    }
    return out;
  }

 private:
  /// fftw_malloc storage, aligned the way the plans expect.
  template <typename T>
  class Buffer {
   public:
    explicit Buffer(std::size_t n) : p_(static_cast<T*>(fftw_malloc(sizeof(T) * n))) {
      if (!p_) throw std::bad_alloc();
    }
    ~Buffer() { fftw_free(p_); }
    Buffer(const Buffer&) = delete;
    Buffer& operator=(const Buffer&) = delete;
    Buffer(Buffer&& o) noexcept : p_(o.p_) { o.p_ = nullptr; }
    Buffer& operator=(Buffer&& o) noexcept {
      std::swap(p_, o.p_);
      return *this;
    }
    T* get() const { return p_; }

   private:
    T* p_;
  };

  // Per-thread work arrays, grown on demand and reused across calls.
  struct Scratch {
    std::size_t nr = 0, nc = 0;
    Buffer<double> r{1};
    Buffer<fftw_complex> c{1};
    double* real(std::size_t n) {
      if (n > nr) r = Buffer<double>(n), nr = n;
      return r.get();
    }
    fftw_complex* spec(std::size_t n) {
      if (n > nc) c = Buffer<fftw_complex>(n), nc = n;
      return c.get();
    }
  };
  static bool aligned(const void* p) {
    return fftw_alignment_of(const_cast<double*>(static_cast<const double*>(p))) == 0;
  }

  static Scratch& scratch() {
    thread_local Scratch s;
    return s;
  }

  BoxSpec box_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace csns
