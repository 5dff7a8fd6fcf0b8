#pragma once

// Vectorised inner loops shared by the targets, integrators and diagnostics.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2/FMA
// variant. The active table is chosen once at startup from the CPU features
// and can be pinned with the CHMC_SIMD environment variable ("scalar" or
// "avx2") or with set_backend(). The two backends agree to rounding; reductions
// are reassociated in the AVX2 path so sums are not bit-identical across
// backends, but each backend is deterministic on its own.

#include <cstddef>
#include <span>
#include <string_view>

namespace chmc::simd {

enum class Backend { scalar, avx2 };

struct KernelTable {
  Backend backend;

  // sum_i x_i^4
  double (*sum_pow4)(const double* x, std::size_t n);
  // out_i = 2 (Q_i^2 + q_i^2) (Q_i + q_i)
  void (*quartic_force)(const double* big_q, const double* q, double* out, std::size_t n);
  // out_i = 4 x_i^3
  void (*quartic_gradient)(const double* x, double* out, std::size_t n);
  // d_q_i = 2 (2 q_i (Q_i + q_i) + Q_i^2 + q_i^2), d_Q_i likewise with Q and q swapped
  void (*quartic_force_jacobian_diag)(const double* big_q, const double* q, double* d_q,
                                      double* d_big_q, std::size_t n);
  // sum_i x_i y_i
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum_i w_i x_i^2
  double (*weighted_sum_sq)(const double* w, const double* x, std::size_t n);
  // y_i += a x_i
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y_i += a w_i x_i
  void (*axpy_weighted)(double a, const double* w, const double* x, double* y, std::size_t n);
  // out_i = base_i + a (x_i + y_i)
  void (*offset_sum)(const double* base, double a, const double* x, const double* y,
                     double* out, std::size_t n);
  // out_i = base_i + a w_i (x_i + y_i)
  void (*offset_sum_weighted)(const double* base, double a, const double* w, const double* x,
                              const double* y, double* out, std::size_t n);
  // Welford update of a per-component mean and second moment with the n-th sample.
  void (*welford_diag)(const double* x, double* mean, double* m2, double count,
                       std::size_t n);
  // max_i |x_i - y_i|
  double (*max_abs_diff)(const double* x, const double* y, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

// The table used by the library.
const KernelTable& active();
Backend active_backend();
// Returns false (and leaves the table unchanged) if the backend is unavailable.
bool set_backend(Backend backend);
std::string_view backend_name(Backend backend);

// Span conveniences over the active table.
inline double sum_pow4(std::span<const double> x) { return active().sum_pow4(x.data(), x.size()); }
inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline double weighted_sum_sq(std::span<const double> w, std::span<const double> x) {
  return active().weighted_sum_sq(w.data(), x.data(), x.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline double max_abs_diff(std::span<const double> x, std::span<const double> y) {
  return active().max_abs_diff(x.data(), y.data(), x.size());
}

}  // namespace chmc::simd
