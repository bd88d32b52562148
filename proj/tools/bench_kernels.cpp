// Times the OpenMP kernels against the serial scalar-loop reference on
// matmul, the im2col convolution path, and the full model forward pass, and
// checks that both implementations agree to near machine precision.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "mgait/kernels.hpp"
#include "mgait/network.hpp"
#include "mgait/reference.hpp"
#include "mgait/rng.hpp"

using namespace mgait;

namespace {

Tensor random_tensor(std::vector<long> shape, uint64_t seed) {
  Tensor t = Tensor::zeros(std::move(shape));
  Rng rng(seed);
  double* p = t.mutable_data();
  for (long i = 0; i < t.size(); ++i) p[i] = rng.normal();
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (long i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Median-of-reps wall time in seconds.
double time_it(const std::function<void()>& fn, int reps) {
  std::vector<double> times;
  times.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

void report(const char* name, double flops, double t_par, double t_ref, double diff) {
  std::printf("%-22s %9.3f ms %9.3f ms %8.2fx %8.2f GFLOP/s  max|diff| %.3g\n", name,
              1e3 * t_par, 1e3 * t_ref, t_ref / t_par, flops / t_par * 1e-9, diff);
}

void bench_matmul(long m, long k, long n, int reps) {
  Tensor a = random_tensor({m, k}, 1);
  Tensor b = random_tensor({k, n}, 2);
  Tensor c_par = Tensor::zeros({m, n});
  Tensor c_ref;
  double t_par = time_it(
      [&] { kernels::matmul(a.data(), b.data(), c_par.mutable_data(), m, k, n); }, reps);
  double t_ref = time_it([&] { c_ref = ref::matmul(a, b); }, std::max(1, reps / 4));
  char name[64];
  std::snprintf(name, sizeof(name), "matmul %ldx%ldx%ld", m, k, n);
  report(name, 2.0 * m * k * n, t_par, t_ref, max_abs_diff(c_par, c_ref));
}

// Same im2col + matmul + permute composition the traced graph uses.
Tensor conv_via_kernels(const Tensor& x, const Tensor& w, long P) {
  const long B = x.dim(0), cin = x.dim(1), L = x.dim(2);
  const long cout = w.dim(0), K = w.dim(2);
  const long lout = L + 2 * P - K + 1;
  Tensor cols = Tensor::zeros({B * lout, cin * K});
  Tensor wt = Tensor::zeros({cin * K, cout});
  Tensor y = Tensor::zeros({B * lout, cout});
  Tensor out = Tensor::zeros({B, cout, lout});
  kernels::im2col(x.data(), cols.mutable_data(), B, cin, L, K, P);
  kernels::transpose(w.data(), wt.mutable_data(), cout, cin * K);
  kernels::matmul(cols.data(), wt.data(), y.mutable_data(), B * lout, cin * K, cout);
  kernels::permute021(y.data(), out.mutable_data(), B, lout, cout);
  return out;
}

void bench_conv(long batch, long cin, long cout, long len, long kernel, int reps) {
  Tensor x = random_tensor({batch, cin, len}, 3);
  Tensor w = random_tensor({cout, cin, kernel}, 4);
  const long pad = (kernel - 1) / 2;
  Tensor y_par, y_ref;
  double t_par = time_it([&] { y_par = conv_via_kernels(x, w, pad); }, reps);
  double t_ref = time_it([&] { y_ref = ref::conv1d(x, w, pad); }, std::max(1, reps / 4));
  char name[64];
  std::snprintf(name, sizeof(name), "conv1d B%ld %ld->%ld k%ld", batch, cin, cout, kernel);
  report(name, 2.0 * batch * cout * cin * kernel * len, t_par, t_ref,
         max_abs_diff(y_par, y_ref));
}

void bench_forward(long batch, int reps) {
  ModelConfig cfg;
  ParameterSet params = init_params(cfg, 5);
  Tensor x = random_tensor({batch, cfg.in_channels, cfg.window_len}, 6);

  Tensor gait_par, gait_ref;
  double t_par = time_it(
      [&] {
        Trace t;
        ParamVars vars = make_param_vars(t, params);
        gait_par = forward(t, vars, params, x, RunMode::kEval, cfg).gait_logits.value();
      },
      reps);
  double t_ref = time_it(
      [&] { gait_ref = ref::forward(params, x, RunMode::kEval, cfg).gait_logits; },
      std::max(1, reps / 4));
  // Dominant cost is the conv; smaller matmuls ride along, so treat this as a lower bound.
  double flops = 2.0 * batch * cfg.conv_channels * cfg.in_channels * cfg.conv_kernel *
                 cfg.window_len;
  char name[64];
  std::snprintf(name, sizeof(name), "forward B%ld (traced)", batch);
  report(name, flops, t_par, t_ref, max_abs_diff(gait_par, gait_ref));
}

}  // namespace

int main(int argc, char** argv) {
  int reps = argc > 1 ? std::atoi(argv[1]) : 9;
  std::printf("threads: %d  (column 1: OpenMP kernels, column 2: serial reference)\n",
              omp_get_max_threads());
  std::printf("%-22s %12s %12s %9s %16s\n", "case", "parallel", "reference", "speedup",
              "throughput");
  bench_matmul(256, 256, 256, reps);
  bench_matmul(512, 512, 512, reps);
  bench_matmul(2000, 164, 64, reps);  // encoder-shaped: rows = batch x window features
  bench_conv(64, 4, 16, 100, 9, reps);
  bench_conv(512, 4, 16, 100, 9, reps);
  bench_forward(200, reps);
  return 0;
}
