// Compiled with -mavx2 -mfma. Nothing in this file may run before the
// dispatcher has confirmed CPU support.

#include "chmc/simd/kernels.hpp"

#if defined(CHMC_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace chmc::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmax(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d m = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

double sum_pow4(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d a = _mm256_loadu_pd(x + i);
    const __m256d b = _mm256_loadu_pd(x + i + 4);
    const __m256d a2 = _mm256_mul_pd(a, a);
    const __m256d b2 = _mm256_mul_pd(b, b);
    acc0 = _mm256_fmadd_pd(a2, a2, acc0);
    acc1 = _mm256_fmadd_pd(b2, b2, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d a = _mm256_loadu_pd(x + i);
    const __m256d a2 = _mm256_mul_pd(a, a);
    acc0 = _mm256_fmadd_pd(a2, a2, acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double x2 = x[i] * x[i];
    s += x2 * x2;
  }
  return s;
}

void quartic_force(const double* big_q, const double* q, double* out, std::size_t n) {
  const __m256d two = _mm256_set1_pd(2.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d a = _mm256_loadu_pd(big_q + i);
    const __m256d b = _mm256_loadu_pd(q + i);
    const __m256d r = _mm256_fmadd_pd(a, a, _mm256_mul_pd(b, b));
    const __m256d s = _mm256_add_pd(a, b);
    _mm256_storeu_pd(out + i, _mm256_mul_pd(two, _mm256_mul_pd(r, s)));
  }
  for (; i < n; ++i) {
    out[i] = 2.0 * (big_q[i] * big_q[i] + q[i] * q[i]) * (big_q[i] + q[i]);
  }
}

void quartic_gradient(const double* x, double* out, std::size_t n) {
  const __m256d four = _mm256_set1_pd(4.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d a = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_mul_pd(four, a), _mm256_mul_pd(a, a)));
  }
  for (; i < n; ++i) out[i] = 4.0 * x[i] * x[i] * x[i];
}

void quartic_force_jacobian_diag(const double* big_q, const double* q, double* d_q,
                                 double* d_big_q, std::size_t n) {
  const __m256d two = _mm256_set1_pd(2.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d a = _mm256_loadu_pd(big_q + i);
    const __m256d b = _mm256_loadu_pd(q + i);
    const __m256d s = _mm256_add_pd(a, b);
    const __m256d r = _mm256_fmadd_pd(a, a, _mm256_mul_pd(b, b));
    const __m256d dq = _mm256_mul_pd(two, _mm256_fmadd_pd(_mm256_mul_pd(two, b), s, r));
    const __m256d dbq = _mm256_mul_pd(two, _mm256_fmadd_pd(_mm256_mul_pd(two, a), s, r));
    _mm256_storeu_pd(d_q + i, dq);
    _mm256_storeu_pd(d_big_q + i, dbq);
  }
  for (; i < n; ++i) {
    const double s = big_q[i] + q[i];
    const double r = big_q[i] * big_q[i] + q[i] * q[i];
    d_q[i] = 2.0 * (2.0 * q[i] * s + r);
    d_big_q[i] = 2.0 * (2.0 * big_q[i] * s + r);
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double weighted_sum_sq(const double* w, const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d a = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), a), a, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += w[i] * x[i] * x[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_weighted(double a, const double* w, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d wx = _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, wx, _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * w[i] * x[i];
}

void offset_sum(const double* base, double a, const double* x, const double* y, double* out,
                std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d s = _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(va, s, _mm256_loadu_pd(base + i)));
  }
  for (; i < n; ++i) out[i] = base[i] + a * (x[i] + y[i]);
}

void offset_sum_weighted(const double* base, double a, const double* w, const double* x,
                         const double* y, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d s = _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    const __m256d ws = _mm256_mul_pd(_mm256_loadu_pd(w + i), s);
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(va, ws, _mm256_loadu_pd(base + i)));
  }
  for (; i < n; ++i) out[i] = base[i] + a * w[i] * (x[i] + y[i]);
}

void welford_diag(const double* x, double* mean, double* m2, double count, std::size_t n) {
  const double inv = 1.0 / count;
  const __m256d vinv = _mm256_set1_pd(inv);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d mv = _mm256_loadu_pd(mean + i);
    const __m256d delta = _mm256_sub_pd(xv, mv);
    const __m256d mnew = _mm256_fmadd_pd(delta, vinv, mv);
    _mm256_storeu_pd(mean + i, mnew);
    _mm256_storeu_pd(m2 + i,
                     _mm256_fmadd_pd(delta, _mm256_sub_pd(xv, mnew), _mm256_loadu_pd(m2 + i)));
  }
  for (; i < n; ++i) {
    const double delta = x[i] - mean[i];
    mean[i] += delta * inv;
    m2[i] += delta * (x[i] - mean[i]);
  }
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_max_pd(acc, _mm256_andnot_pd(sign, d));
  }
  double m = hmax(acc);
  for (; i < n; ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

constexpr KernelTable kAvx2{
    Backend::avx2,    sum_pow4,   quartic_force,       quartic_gradient,
    quartic_force_jacobian_diag,  dot,                 weighted_sum_sq,
    axpy,             axpy_weighted, offset_sum,       offset_sum_weighted,
    welford_diag,     max_abs_diff,
};

}  // namespace

const KernelTable* avx2_table_unchecked() { return &kAvx2; }

}  // namespace chmc::simd

#else

namespace chmc::simd {
const KernelTable* avx2_table_unchecked() { return nullptr; }
}  // namespace chmc::simd

#endif
