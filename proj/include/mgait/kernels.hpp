#pragma once

// Parallel compute kernels behind the trace primitives. Every kernel keeps a
// fixed per-output-element summation order, so results are bit-identical for
// any thread count. A naive serial counterpart of each kernel lives in
// reference.hpp and is used for testing and benchmarking.

namespace mgait::kernels {

// C[m,n] = A[m,k] * B[k,n]
void matmul(const double* A, const double* B, double* C, long m, long k, long n);

// B[c,r] = A[r,c]
void transpose(const double* A, double* B, long r, long c);

// x: [B,C,L] row-major -> cols: [B*Lout, C*K], Lout = L + 2P - K + 1.
// Out-of-range taps read as zero (zero padding).
void im2col(const double* x, double* cols, long batch, long ch, long len, long K, long P);

// Adjoint of im2col: cols [B*Lout, C*K] -> x [B,C,L], accumulating.
void col2im(const double* cols, double* x, long batch, long ch, long len, long K, long P);

// [a,b,c] -> [a,c,b]
void permute021(const double* x, double* y, long a, long b, long c);

void row_sum(const double* x, double* y, long r, long c);   // -> [r,1]
void col_sum(const double* x, double* y, long r, long c);   // -> [1,c]
double sum_all(const double* x, long n);                    // serial, deterministic

void bcast_row(const double* v, double* y, long r, long c);  // v[1,c] -> y[r,c]
void bcast_col(const double* v, double* y, long r, long c);  // v[r,1] -> y[r,c]

void ew_add(const double* a, const double* b, double* y, long n);
void ew_sub(const double* a, const double* b, double* y, long n);
void ew_mul(const double* a, const double* b, double* y, long n);
void ew_div(const double* a, const double* b, double* y, long n);
// a/b where b != 0, else 0 (used for gradients with a defined value at 0).
void ew_divnz(const double* a, const double* b, double* y, long n);
void ew_exp(const double* a, double* y, long n);
void ew_log(const double* a, double* y, long n);
void ew_sqrt(const double* a, double* y, long n);
void ew_relu(const double* a, double* y, long n);
void ew_axpb(const double* a, double alpha, double beta, double* y, long n);  // alpha*a + beta

bool all_finite(const double* x, long n);

}  // namespace mgait::kernels
