#include "mgait/baselines.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "mgait/rng.hpp"

namespace mgait {

// ---------------------------------------------------------------------- adam

AdamState make_adam_state(const ParameterSet& params) {
  AdamState st;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    st.names.push_back(e.name);
    st.m.push_back(Tensor::zeros(e.tensor.shape()));
    st.v.push_back(Tensor::zeros(e.tensor.shape()));
  }
  return st;
}

void adam_step(ParameterSet& params, AdamState& state, const std::vector<Tensor>& grads,
               const AdamConfig& ac) {
  if (grads.size() != state.names.size())
    throw std::invalid_argument("adam_step: gradient count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(ac.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(ac.beta2, static_cast<double>(state.t));
  for (size_t j = 0; j < state.names.size(); ++j) {
    const Tensor& g = grads[j];
    Tensor next = params.get(state.names[j]).clone();
    if (g.shape() != next.shape())
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + state.names[j]);
    double* m = state.m[j].mutable_data();
    double* v = state.v[j].mutable_data();
    double* p = next.mutable_data();
    for (long i = 0; i < next.size(); ++i) {
      m[i] = ac.beta1 * m[i] + (1.0 - ac.beta1) * g[i];
      v[i] = ac.beta2 * v[i] + (1.0 - ac.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= ac.lr * mhat / (std::sqrt(vhat) + ac.eps);
    }
    params.set(state.names[j], std::move(next));
  }
}

// ---------------------------------------------------------------- pretraining

PoolSource pool_source(TaskData pool) {
  PoolSource src;
  src.size = pool.windows.dim(0);
  src.fetch = [pool = std::move(pool)](const std::vector<long>& idx) {
    return subset(pool, idx);
  };
  return src;
}

std::vector<PretrainLog> pretrain(ParameterSet& params, const TaskData& pool,
                                  const PretrainConfig& pc, const ModelConfig& cfg,
                                  const LossWeights& w) {
  return pretrain(params, pool_source(pool), pc, cfg, w);
}

std::vector<PretrainLog> pretrain(ParameterSet& params, const PoolSource& pool,
                                  const PretrainConfig& pc, const ModelConfig& cfg,
                                  const LossWeights& w) {
  const long N = pool.size;
  if (N < 1) throw std::invalid_argument("pretrain: empty pool");
  if (pc.batch < 1) throw std::invalid_argument("pretrain: batch must be positive");

  std::ofstream log;
  if (!pc.log_path.empty()) {
    log.open(pc.log_path);
    if (!log) throw std::runtime_error("pretrain: cannot open log " + pc.log_path);
    log << "epoch,mean_loss,batches,wall_s\n";
  }

  AdamState adam = make_adam_state(params);
  std::vector<PretrainLog> out;
  out.reserve(static_cast<size_t>(pc.epochs));
  for (int e = 0; e < pc.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<long> order(static_cast<size_t>(N));
    std::iota(order.begin(), order.end(), 0L);
    Rng rng(seed_mix(pc.seed, 0x7072657472ULL, static_cast<uint64_t>(e)));
    rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    for (long lo = 0; lo < N; lo += pc.batch) {
      if (pc.max_batches_per_epoch > 0 && batches >= pc.max_batches_per_epoch) break;
      const long hi = std::min(N, lo + pc.batch);
      TaskData mb = pool.fetch(std::vector<long>(order.begin() + lo, order.begin() + hi));

      Trace t;
      ParamVars pv = make_param_vars(t, params, /*trainable_only=*/true);
      ForwardOut fo = forward(t, pv, params, mb.windows, RunMode::kTrain, cfg);
      update_running_stats(params, fo.bn_mean, fo.bn_var, cfg.bn_momentum);
      Var loss = weighted_loss(fo, mb.labels, w).total;
      loss_sum += loss.scalar();
      ++batches;

      std::vector<Var> leaves;
      for (const auto& [name, var] : pv.vars) leaves.push_back(var);
      GradientMap g = backward(loss, leaves, /*detached=*/true);
      std::vector<Tensor> grads;
      grads.reserve(leaves.size());
      for (Var l : leaves) grads.push_back(g.get(l));
      adam_step(params, adam, grads, pc.adam);
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    PretrainLog pl{e, batches > 0 ? loss_sum / batches : 0.0, batches, wall};
    out.push_back(pl);
    if (log) log << pl.epoch << ',' << pl.mean_loss << ',' << pl.batches << ',' << pl.wall_s << '\n';
  }
  return out;
}

// ------------------------------------------------------------------- regimes

const char* baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::kRI: return "RI";
    case BaselineKind::kDE: return "DE";
    case BaselineKind::kTL: return "TL";
    case BaselineKind::kSFT: return "SFT";
  }
  throw std::invalid_argument("baseline_name: unknown kind");
}

double default_ft_lr(BaselineKind k) {
  switch (k) {
    case BaselineKind::kRI: return 1.5e-4;
    case BaselineKind::kDE: return 0.0;
    case BaselineKind::kTL: return 8e-4;
    case BaselineKind::kSFT: return 1e-6;
  }
  throw std::invalid_argument("default_ft_lr: unknown kind");
}

std::vector<std::string> frozen_prefixes(BaselineKind k) {
  if (k == BaselineKind::kTL) return {"conv.", "bn."};
  return {};
}

ParameterSet run_baseline(BaselineKind kind, const ParameterSet& pretrained,
                          const Tensor& cal_x, const BatchLabels& cal_y,
                          const FineTuneConfig& ft, const ModelConfig& cfg,
                          const LossWeights& w, uint64_t ri_seed) {
  if (kind == BaselineKind::kDE) {
    if (ft.steps != 0)
      throw std::invalid_argument("run_baseline: direct eval takes no fine-tune steps");
    return pretrained;
  }
  ParameterSet deployed =
      kind == BaselineKind::kRI ? init_params(cfg, ri_seed) : pretrained;
  fine_tune(deployed, cal_x, cal_y, ft, cfg, w, frozen_prefixes(kind));
  return deployed;
}

}  // namespace mgait
