#include "chmc/simd/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace chmc::simd {
namespace {

double sum_pow4(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x2 = x[i] * x[i];
    s += x2 * x2;
  }
  return s;
}

void quartic_force(const double* big_q, const double* q, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 2.0 * (big_q[i] * big_q[i] + q[i] * q[i]) * (big_q[i] + q[i]);
  }
}

void quartic_gradient(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 4.0 * x[i] * x[i] * x[i];
}

void quartic_force_jacobian_diag(const double* big_q, const double* q, double* d_q,
                                 double* d_big_q, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double s = big_q[i] + q[i];
    const double r = big_q[i] * big_q[i] + q[i] * q[i];
    d_q[i] = 2.0 * (2.0 * q[i] * s + r);
    d_big_q[i] = 2.0 * (2.0 * big_q[i] * s + r);
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double weighted_sum_sq(const double* w, const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * x[i] * x[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpy_weighted(double a, const double* w, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * w[i] * x[i];
}

void offset_sum(const double* base, double a, const double* x, const double* y, double* out,
                std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = base[i] + a * (x[i] + y[i]);
}

void offset_sum_weighted(const double* base, double a, const double* w, const double* x,
                         const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = base[i] + a * w[i] * (x[i] + y[i]);
}

void welford_diag(const double* x, double* mean, double* m2, double count, std::size_t n) {
  const double inv = 1.0 / count;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = x[i] - mean[i];
    mean[i] += delta * inv;
    m2[i] += delta * (x[i] - mean[i]);
  }
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

constexpr KernelTable kScalar{
    Backend::scalar,  sum_pow4,   quartic_force,       quartic_gradient,
    quartic_force_jacobian_diag,  dot,                 weighted_sum_sq,
    axpy,             axpy_weighted, offset_sum,       offset_sum_weighted,
    welford_diag,     max_abs_diff,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace chmc::simd
