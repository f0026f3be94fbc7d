#include "xgen/kernels.hpp"

#include <cmath>

namespace xgen::kernels {
namespace {

double dot_scalar(const double* x, const double* y, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void matvec_scalar(const double* a, const double* x, double* y, size_t m, size_t n) {
  for (size_t r = 0; r < m; ++r) {
    const double* row = a + r * n;
    double s = 0.0;
    for (size_t c = 0; c < n; ++c) s += row[c] * x[c];
    y[r] += s;
  }
}

void matvec_t_scalar(const double* a, const double* x, double* y, size_t m, size_t n) {
  for (size_t r = 0; r < m; ++r) {
    const double* row = a + r * n;
    double xr = x[r];
    for (size_t c = 0; c < n; ++c) y[c] += row[c] * xr;
  }
}

void outer_acc_scalar(const double* u, const double* v, double* a, size_t m, size_t n) {
  for (size_t r = 0; r < m; ++r) {
    double ur = u[r];
    double* row = a + r * n;
    for (size_t c = 0; c < n; ++c) row[c] += ur * v[c];
  }
}

void lrelu_scalar(const double* x, double* y, size_t n, double slope) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void lrelu_bwd_scalar(const double* x, const double* gy, double* gx, size_t n, double slope) {
  for (size_t i = 0; i < n; ++i) gx[i] += gy[i] * (x[i] > 0.0 ? 1.0 : slope);
}

void adam_scalar(double* p, const double* g, double* m, double* v, size_t n,
                 double lr, double b1, double b2, double eps, double c1, double c2) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    double mhat = m[i] / c1;
    double vhat = v[i] / c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

double sum_scalar(const double* x, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sum_abs_scalar(const double* x, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += std::fabs(x[i]);
  return s;
}

double sum_sq_scalar(const double* x, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

}  // namespace

const Table& scalar_table() {
  static const Table t = {
      "scalar",        dot_scalar,   axpy_scalar,      matvec_scalar,
      matvec_t_scalar, outer_acc_scalar, lrelu_scalar, lrelu_bwd_scalar,
      adam_scalar,     sum_scalar,   sum_abs_scalar,   sum_sq_scalar,
  };
  return t;
}

}  // namespace xgen::kernels
