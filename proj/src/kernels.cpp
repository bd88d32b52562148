#include "mgait/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mgait::kernels {

// Parallelism thresholds: below these the loop runs serially to avoid fork
// overhead on small operands.
namespace {
constexpr long kParRows = 64;
constexpr long kParElems = 1 << 14;
}  // namespace

void matmul(const double* A, const double* B, double* C, long m, long k, long n) {
#pragma omp parallel for schedule(static) if (m >= kParRows && m * k * n >= kParElems)
  for (long i = 0; i < m; ++i) {
    double* Ci = C + i * n;
    for (long j = 0; j < n; ++j) Ci[j] = 0.0;
    const double* Ai = A + i * k;
    for (long p = 0; p < k; ++p) {
      const double a = Ai[p];
      const double* Bp = B + p * n;
      for (long j = 0; j < n; ++j) Ci[j] += a * Bp[j];
    }
  }
}

void transpose(const double* A, double* B, long r, long c) {
#pragma omp parallel for schedule(static) if (r >= kParRows && r * c >= kParElems)
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) B[j * r + i] = A[i * c + j];
}

void im2col(const double* x, double* cols, long batch, long ch, long len, long K, long P) {
  const long lout = len + 2 * P - K + 1;
#pragma omp parallel for schedule(static) if (batch * lout >= kParRows)
  for (long bt = 0; bt < batch * lout; ++bt) {
    const long b = bt / lout;
    const long t = bt % lout;
    double* row = cols + bt * (ch * K);
    const double* xb = x + b * ch * len;
    for (long c = 0; c < ch; ++c) {
      const double* xc = xb + c * len;
      for (long kk = 0; kk < K; ++kk) {
        const long src = t + kk - P;
        row[c * K + kk] = (src >= 0 && src < len) ? xc[src] : 0.0;
      }
    }
  }
}

void col2im(const double* cols, double* x, long batch, long ch, long len, long K, long P) {
  const long lout = len + 2 * P - K + 1;
#pragma omp parallel for schedule(static) if (batch >= 4)
  for (long b = 0; b < batch; ++b) {
    double* xb = x + b * ch * len;
    for (long i = 0; i < ch * len; ++i) xb[i] = 0.0;
    const double* rows = cols + b * lout * (ch * K);
    for (long t = 0; t < lout; ++t) {
      const double* row = rows + t * (ch * K);
      for (long c = 0; c < ch; ++c) {
        double* xc = xb + c * len;
        for (long kk = 0; kk < K; ++kk) {
          const long dst = t + kk - P;
          if (dst >= 0 && dst < len) xc[dst] += row[c * K + kk];
        }
      }
    }
  }
}

void permute021(const double* x, double* y, long a, long b, long c) {
#pragma omp parallel for schedule(static) if (a * b * c >= kParElems && a >= 4)
  for (long i = 0; i < a; ++i) {
    const double* xi = x + i * b * c;
    double* yi = y + i * b * c;
    for (long j = 0; j < b; ++j)
      for (long l = 0; l < c; ++l) yi[l * b + j] = xi[j * c + l];
  }
}

void row_sum(const double* x, double* y, long r, long c) {
#pragma omp parallel for schedule(static) if (r >= kParRows && r * c >= kParElems)
  for (long i = 0; i < r; ++i) {
    const double* xi = x + i * c;
    double s = 0.0;
    for (long j = 0; j < c; ++j) s += xi[j];
    y[i] = s;
  }
}

void col_sum(const double* x, double* y, long r, long c) {
  // Column-major accumulation in fixed row order; parallel over columns.
#pragma omp parallel for schedule(static) if (c >= 8 && r * c >= kParElems)
  for (long j = 0; j < c; ++j) {
    double s = 0.0;
    for (long i = 0; i < r; ++i) s += x[i * c + j];
    y[j] = s;
  }
}

double sum_all(const double* x, long n) {
  double s = 0.0;
  for (long i = 0; i < n; ++i) s += x[i];
  return s;
}

void bcast_row(const double* v, double* y, long r, long c) {
#pragma omp parallel for schedule(static) if (r >= kParRows && r * c >= kParElems)
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) y[i * c + j] = v[j];
}

void bcast_col(const double* v, double* y, long r, long c) {
#pragma omp parallel for schedule(static) if (r >= kParRows && r * c >= kParElems)
  for (long i = 0; i < r; ++i) {
    const double vi = v[i];
    for (long j = 0; j < c; ++j) y[i * c + j] = vi;
  }
}

#define MGAIT_EW_BINARY(name, expr)                                    \
  void name(const double* a, const double* b, double* y, long n) {     \
    _Pragma("omp parallel for schedule(static) if (n >= kParElems)")   \
    for (long i = 0; i < n; ++i) y[i] = (expr);                        \
  }

MGAIT_EW_BINARY(ew_add, a[i] + b[i])
MGAIT_EW_BINARY(ew_sub, a[i] - b[i])
MGAIT_EW_BINARY(ew_mul, a[i] * b[i])
MGAIT_EW_BINARY(ew_div, a[i] / b[i])
MGAIT_EW_BINARY(ew_divnz, b[i] == 0.0 ? 0.0 : a[i] / b[i])
#undef MGAIT_EW_BINARY

void ew_exp(const double* a, double* y, long n) {
#pragma omp parallel for schedule(static) if (n >= kParElems)
  for (long i = 0; i < n; ++i) y[i] = std::exp(a[i]);
}

void ew_log(const double* a, double* y, long n) {
#pragma omp parallel for schedule(static) if (n >= kParElems)
  for (long i = 0; i < n; ++i) y[i] = std::log(a[i]);
}

void ew_sqrt(const double* a, double* y, long n) {
#pragma omp parallel for schedule(static) if (n >= kParElems)
  for (long i = 0; i < n; ++i) y[i] = std::sqrt(a[i]);
}

void ew_relu(const double* a, double* y, long n) {
#pragma omp parallel for schedule(static) if (n >= kParElems)
  for (long i = 0; i < n; ++i) y[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void ew_axpb(const double* a, double alpha, double beta, double* y, long n) {
#pragma omp parallel for schedule(static) if (n >= kParElems)
  for (long i = 0; i < n; ++i) y[i] = alpha * a[i] + beta;
}

bool all_finite(const double* x, long n) {
  for (long i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

}  // namespace mgait::kernels
