#include "mgait/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace mgait::ref {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("ref::matmul: incompatible shapes");
  const long m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c = Tensor::zeros({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.mutable_data();
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j) {
      double s = 0.0;
      for (long l = 0; l < k; ++l) s += pa[i * k + l] * pb[l * n + j];
      pc[i * n + j] = s;
    }
  return c;
}

Tensor conv1d(const Tensor& x, const Tensor& w, long padding) {
  if (x.rank() != 3 || w.rank() != 3 || x.dim(1) != w.dim(1))
    throw std::invalid_argument("ref::conv1d: incompatible shapes");
  const long B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const long Cout = w.dim(0), K = w.dim(2);
  const long Lout = L + 2 * padding - K + 1;
  if (Lout < 1) throw std::invalid_argument("ref::conv1d: kernel wider than padded input");
  Tensor y = Tensor::zeros({B, Cout, Lout});
  for (long b = 0; b < B; ++b)
    for (long co = 0; co < Cout; ++co)
      for (long t = 0; t < Lout; ++t) {
        double s = 0.0;
        for (long ci = 0; ci < Cin; ++ci)
          for (long k = 0; k < K; ++k) {
            const long src = t - padding + k;
            if (src < 0 || src >= L) continue;
            s += x.data()[(b * Cin + ci) * L + src] * w.data()[(co * Cin + ci) * K + k];
          }
        y.mutable_data()[(b * Cout + co) * Lout + t] = s;
      }
  return y;
}

namespace {

// rows [n,in] * W^T [out,in] + bias [1,out]
Tensor linear(const Tensor& h, const Tensor& w, const Tensor& bias) {
  const long n = h.dim(0), in = h.dim(1), out = w.dim(0);
  if (w.dim(1) != in || bias.dim(1) != out)
    throw std::invalid_argument("ref::linear: incompatible shapes");
  Tensor y = Tensor::zeros({n, out});
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < out; ++j) {
      double s = 0.0;
      for (long l = 0; l < in; ++l) s += h.data()[i * in + l] * w.data()[j * in + l];
      y.mutable_data()[i * out + j] = s + bias.data()[j];
    }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = x.clone();
  for (long i = 0; i < y.size(); ++i)
    if (y.mutable_data()[i] < 0.0) y.mutable_data()[i] = 0.0;
  return y;
}

Tensor mlp_head(const ParameterSet& p, const std::string& prefix, const Tensor& h) {
  Tensor a = relu(linear(h, p.get(prefix + ".fc1.weight"), p.get(prefix + ".fc1.bias")));
  return linear(a, p.get(prefix + ".fc2.weight"), p.get(prefix + ".fc2.bias"));
}

}  // namespace

ForwardResult forward(const ParameterSet& p, const Tensor& batch, RunMode mode,
                      const ModelConfig& cfg) {
  const long B = batch.dim(0), Cin = cfg.in_channels, k = cfg.window_len;
  const long C = cfg.conv_channels, K = cfg.conv_kernel, P = (K - 1) / 2;
  const long E = cfg.encoder_width;

  // conv + bias; activations indexed [batch, time, channel] to mirror the
  // row-per-(batch,time) layout of the traced path.
  Tensor conv = conv1d(batch, p.get("conv.weight"), P);  // [B,C,k]
  std::vector<double> h(static_cast<size_t>(B * k * C));
  for (long b = 0; b < B; ++b)
    for (long t = 0; t < k; ++t)
      for (long c = 0; c < C; ++c)
        h[static_cast<size_t>((b * k + t) * C + c)] =
            conv.data()[(b * C + c) * k + t] + p.get("conv.bias").data()[c];

  // batch norm over all (batch,time) rows, one statistic per channel.
  const long R = B * k;
  std::vector<double> mean(static_cast<size_t>(C), 0.0), var(static_cast<size_t>(C), 0.0);
  if (mode == RunMode::kTrain) {
    for (long c = 0; c < C; ++c) {
      double s = 0.0;
      for (long r = 0; r < R; ++r) s += h[static_cast<size_t>(r * C + c)];
      mean[static_cast<size_t>(c)] = s / static_cast<double>(R);
    }
    for (long c = 0; c < C; ++c) {
      double s = 0.0;
      for (long r = 0; r < R; ++r) {
        const double d = h[static_cast<size_t>(r * C + c)] - mean[static_cast<size_t>(c)];
        s += d * d;
      }
      var[static_cast<size_t>(c)] = s / static_cast<double>(R);  // biased
    }
  } else {
    for (long c = 0; c < C; ++c) {
      mean[static_cast<size_t>(c)] = p.get("bn.running_mean").data()[c];
      var[static_cast<size_t>(c)] = p.get("bn.running_var").data()[c];
    }
  }
  const Tensor& gamma = p.get("bn.gamma");
  const Tensor& beta = p.get("bn.beta");
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      double& v = h[static_cast<size_t>(r * C + c)];
      v = (v - mean[static_cast<size_t>(c)]) /
              std::sqrt(var[static_cast<size_t>(c)] + cfg.bn_eps) * gamma.data()[c] +
          beta.data()[c];
    }

  // features: per-channel mean over the window, then the final frame.
  Tensor feat = Tensor::zeros({B, 2 * C});
  for (long b = 0; b < B; ++b)
    for (long c = 0; c < C; ++c) {
      double s = 0.0;
      for (long t = 0; t < k; ++t) s += h[static_cast<size_t>((b * k + t) * C + c)];
      feat.mutable_data()[b * 2 * C + c] = s * (1.0 / static_cast<double>(k));
      feat.mutable_data()[b * 2 * C + C + c] = h[static_cast<size_t>((b * k + k - 1) * C + c)];
    }

  Tensor z = relu(linear(feat, p.get("encoder.weight"), p.get("encoder.bias")));  // [B,E]

  ForwardResult out;
  out.loc_logits = mlp_head(p, "head_loc", z);

  // softmax of the mode logits, max-shifted, appended to the shared features.
  const long M = cfg.n_modes;
  Tensor zf = Tensor::zeros({B, E + M});
  for (long b = 0; b < B; ++b) {
    for (long e = 0; e < E; ++e) zf.mutable_data()[b * (E + M) + e] = z.data()[b * E + e];
    const double* lg = out.loc_logits.data() + b * M;
    double mx = lg[0];
    for (long m = 1; m < M; ++m) mx = std::max(mx, lg[m]);
    double denom = 0.0;
    for (long m = 0; m < M; ++m) denom += std::exp(lg[m] - mx);
    for (long m = 0; m < M; ++m)
      zf.mutable_data()[b * (E + M) + E + m] = std::exp(lg[m] - mx) / denom;
  }

  out.gait_logits = mlp_head(p, "head_gait", zf);
  out.incline = mlp_head(p, "head_inc", zf);
  return out;
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const long n = logits.dim(0), k = logits.dim(1);
  if (static_cast<long>(labels.size()) != n)
    throw std::invalid_argument("ref::cross_entropy: label count mismatch");
  double total = 0.0;
  for (long i = 0; i < n; ++i) {
    const double* row = logits.data() + i * k;
    double mx = row[0];
    for (long j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (long j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    total += mx + std::log(denom) - row[labels[static_cast<size_t>(i)]];
  }
  return total / static_cast<double>(n);
}

double rmse(const Tensor& pred, const std::vector<double>& target) {
  const long n = pred.dim(0);
  if (static_cast<long>(target.size()) != n)
    throw std::invalid_argument("ref::rmse: target count mismatch");
  double s = 0.0;
  for (long i = 0; i < n; ++i) {
    const double d = pred.data()[i] - target[static_cast<size_t>(i)];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(n));
}

double weighted_loss(const ForwardResult& out, const BatchLabels& labels,
                     const LossWeights& w) {
  return combine_components(w, cross_entropy(out.gait_logits, labels.gait),
                            rmse(out.incline, labels.incline),
                            cross_entropy(out.loc_logits, labels.loc));
}

double loss_at(const ParameterSet& params, const Tensor& batch, const BatchLabels& labels,
               const LossWeights& w, RunMode mode, const ModelConfig& cfg) {
  return weighted_loss(forward(params, batch, mode, cfg), labels, w);
}

}  // namespace mgait::ref
