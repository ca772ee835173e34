#pragma once

#include <cstddef>

// Data-parallel primitives underneath the dense kernels. Every entry point
// has a scalar reference implementation and an AVX2+FMA variant selected at
// runtime; set_force_scalar(true) pins the scalar path (used by the
// equivalence tests).
namespace cmtf::kernels {

void set_force_scalar(bool v);
bool force_scalar();
bool cpu_has_avx2();

// sum_i a[i]*b[i]
double dot(const double* a, const double* b, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// x *= alpha
void scale(double* x, double alpha, std::size_t n);

// out = a .* b
void hadamard(const double* a, const double* b, double* out, std::size_t n);

// acc += a .* b
void hadamard_acc(double* acc, const double* a, const double* b, std::size_t n);

// sum_i x[i]^2
double sumsq(const double* x, std::size_t n);

// sum_i (a[i]-b[i])^2
double sumsq_diff(const double* a, const double* b, std::size_t n);

// x[i] = max(x[i], 0)
void clamp_min_zero(double* x, std::size_t n);

// out = a + beta*b  (out may alias a)
void add_scaled(const double* a, double beta, const double* b, double* out, std::size_t n);

}  // namespace cmtf::kernels
