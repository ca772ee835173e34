#include "cmtf/kernels.hpp"

#include <atomic>

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#define CMTF_X86_DISPATCH 1
#include <immintrin.h>
#else
#define CMTF_X86_DISPATCH 0
#endif

namespace cmtf::kernels {

namespace {
std::atomic<bool> g_force_scalar{false};

bool detect_avx2() {
#if CMTF_X86_DISPATCH
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}
}  // namespace

void set_force_scalar(bool v) { g_force_scalar.store(v, std::memory_order_relaxed); }
bool force_scalar() { return g_force_scalar.load(std::memory_order_relaxed); }

bool cpu_has_avx2() {
  static const bool has = detect_avx2();
  return has;
}

namespace {

inline bool use_simd() { return cpu_has_avx2() && !force_scalar(); }

// ---- scalar reference kernels ----

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double* x, double alpha, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void hadamard_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void hadamard_acc_scalar(double* acc, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += a[i] * b[i];
}

double sumsq_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

double sumsq_diff_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void clamp_min_zero_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void add_scaled_scalar(const double* a, double beta, const double* b, double* out,
                       std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + beta * b[i];
}

#if CMTF_X86_DISPATCH

// ---- AVX2+FMA kernels (4 doubles per vector) ----

__attribute__((target("avx2,fma"))) double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

__attribute__((target("avx2,fma"))) double dot_avx2(const double* a, const double* b,
                                                    std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

__attribute__((target("avx2,fma"))) void axpy_avx2(double alpha, const double* x, double* y,
                                                   std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

__attribute__((target("avx2,fma"))) void scale_avx2(double* x, double alpha, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
  }
  for (; i < n; ++i) x[i] *= alpha;
}

__attribute__((target("avx2,fma"))) void hadamard_avx2(const double* a, const double* b,
                                                       double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

__attribute__((target("avx2,fma"))) void hadamard_acc_avx2(double* acc, const double* a,
                                                           const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(acc + i);
    v = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), v);
    _mm256_storeu_pd(acc + i, v);
  }
  for (; i < n; ++i) acc[i] += a[i] * b[i];
}

__attribute__((target("avx2,fma"))) double sumsq_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

__attribute__((target("avx2,fma"))) double sumsq_diff_avx2(const double* a, const double* b,
                                                           std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

__attribute__((target("avx2,fma"))) void clamp_min_zero_avx2(double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  }
  for (; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

__attribute__((target("avx2,fma"))) void add_scaled_avx2(const double* a, double beta,
                                                         const double* b, double* out,
                                                         std::size_t n) {
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_fmadd_pd(vb, _mm256_loadu_pd(b + i), _mm256_loadu_pd(a + i));
    _mm256_storeu_pd(out + i, v);
  }
  for (; i < n; ++i) out[i] = a[i] + beta * b[i];
}

#endif  // CMTF_X86_DISPATCH

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
#if CMTF_X86_DISPATCH
  if (use_simd()) return dot_avx2(a, b, n);
#endif
  return dot_scalar(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
#if CMTF_X86_DISPATCH
  if (use_simd()) {
    axpy_avx2(alpha, x, y, n);
    return;
  }
#endif
  axpy_scalar(alpha, x, y, n);
}

void scale(double* x, double alpha, std::size_t n) {
#if CMTF_X86_DISPATCH
  if (use_simd()) {
    scale_avx2(x, alpha, n);
    return;
  }
#endif
  scale_scalar(x, alpha, n);
}

void hadamard(const double* a, const double* b, double* out, std::size_t n) {
#if CMTF_X86_DISPATCH
  if (use_simd()) {
    hadamard_avx2(a, b, out, n);
    return;
  }
#endif
  hadamard_scalar(a, b, out, n);
}

void hadamard_acc(double* acc, const double* a, const double* b, std::size_t n) {
#if CMTF_X86_DISPATCH
  if (use_simd()) {
    hadamard_acc_avx2(acc, a, b, n);
    return;
  }
#endif
  hadamard_acc_scalar(acc, a, b, n);
}

double sumsq(const double* x, std::size_t n) {
#if CMTF_X86_DISPATCH
  if (use_simd()) return sumsq_avx2(x, n);
#endif
  return sumsq_scalar(x, n);
}

double sumsq_diff(const double* a, const double* b, std::size_t n) {
#if CMTF_X86_DISPATCH
  if (use_simd()) return sumsq_diff_avx2(a, b, n);
#endif
  return sumsq_diff_scalar(a, b, n);
}

void clamp_min_zero(double* x, std::size_t n) {
#if CMTF_X86_DISPATCH
  if (use_simd()) {
    clamp_min_zero_avx2(x, n);
    return;
  }
#endif
  clamp_min_zero_scalar(x, n);
}

void add_scaled(const double* a, double beta, const double* b, double* out, std::size_t n) {
#if CMTF_X86_DISPATCH
  if (use_simd()) {
    add_scaled_avx2(a, beta, b, out, n);
    return;
  }
#endif
  add_scaled_scalar(a, beta, b, out, n);
}

}  // namespace cmtf::kernels
