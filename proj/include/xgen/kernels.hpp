#pragma once

#include <cstddef>
#include <string>

namespace xgen::kernels {

// Double-precision inner-loop kernels behind the network math. Every entry has
// a scalar reference implementation and may have SIMD variants; the active
// table is chosen at runtime (cpuid, overridable via set_backend or the
// XGEN_SIMD env var: auto|scalar|avx2).
//
// Reductions accumulate lane-wise partial sums, so results are deterministic
// for a fixed backend but may differ in the last bits between backends; the
// equivalence tests bound that difference.
struct Table {
  const char* name;

  // sum_i x[i]*y[i]
  double (*dot)(const double* x, const double* y, size_t n);
  // y[i] += a*x[i]
  void (*axpy)(double a, const double* x, double* y, size_t n);
  // y[m] += A[m x n] * x[n], A row-major
  void (*matvec)(const double* a, const double* x, double* y, size_t m, size_t n);
  // y[n] += A^T * x[m]
  void (*matvec_t)(const double* a, const double* x, double* y, size_t m, size_t n);
  // A[m x n] += u[m] * v[n]^T
  void (*outer_acc)(const double* u, const double* v, double* a, size_t m, size_t n);
  // y[i] = x[i] > 0 ? x[i] : slope*x[i]
  void (*lrelu)(const double* x, double* y, size_t n, double slope);
  // gx[i] += gy[i] * (x[i] > 0 ? 1 : slope)
  void (*lrelu_bwd)(const double* x, const double* gy, double* gx, size_t n, double slope);
  // Adam update with precomputed bias corrections c1 = 1-b1^t, c2 = 1-b2^t
  void (*adam)(double* p, const double* g, double* m, double* v, size_t n,
               double lr, double b1, double b2, double eps, double c1, double c2);
  double (*sum)(const double* x, size_t n);
  double (*sum_abs)(const double* x, size_t n);
  double (*sum_sq)(const double* x, size_t n);
};

enum class Backend { scalar, avx2 };

bool avx2_supported();
Backend active_backend();
void set_backend(Backend b);  // throws xgen::Error if unsupported on this CPU
const Table& active();

const Table& scalar_table();
const Table* avx2_table();  // nullptr when not compiled in / not supported

}  // namespace xgen::kernels
