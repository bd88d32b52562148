#include "mgait/meta.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "mgait/rng.hpp"

namespace mgait {

// ------------------------------------------------------------------ episodes

TaskData subset(const TaskData& task, const std::vector<long>& idx) {
  const long C = task.windows.dim(1), L = task.windows.dim(2);
  const long n = static_cast<long>(idx.size());
  TaskData out;
  out.windows = Tensor::zeros({n, C, L});
  out.labels.gait.reserve(idx.size());
  out.labels.loc.reserve(idx.size());
  out.labels.incline.reserve(idx.size());
  const long stride = C * L;
  for (long r = 0; r < n; ++r) {
    const long src = idx[static_cast<size_t>(r)];
    if (src < 0 || src >= task.windows.dim(0))
      throw std::invalid_argument("subset: window index out of range");
    std::copy(task.windows.data() + src * stride, task.windows.data() + (src + 1) * stride,
              out.windows.mutable_data() + r * stride);
    out.labels.gait.push_back(task.labels.gait[static_cast<size_t>(src)]);
    out.labels.loc.push_back(task.labels.loc[static_cast<size_t>(src)]);
    out.labels.incline.push_back(task.labels.incline[static_cast<size_t>(src)]);
  }
  return out;
}

Episode sample_episode(const TaskData& task, long n, long m, uint64_t seed) {
  const long N = task.windows.dim(0);
  if (n < 1 || m < 1)
    throw std::invalid_argument("sample_episode: support and query must be non-empty");
  if (n + m > N)
    throw std::invalid_argument("sample_episode: need " + std::to_string(n + m) +
                                " windows, task has " + std::to_string(N));
  std::vector<long> idx(static_cast<size_t>(N));
  std::iota(idx.begin(), idx.end(), 0L);
  Rng rng(seed);
  rng.shuffle(idx);

  Episode ep;
  TaskData spt = subset(task, std::vector<long>(idx.begin(), idx.begin() + n));
  TaskData qry = subset(task, std::vector<long>(idx.begin() + n, idx.begin() + n + m));
  ep.support_x = std::move(spt.windows);
  ep.support_y = std::move(spt.labels);
  ep.query_x = std::move(qry.windows);
  ep.query_y = std::move(qry.labels);
  return ep;
}

uint64_t episode_seed(uint64_t seed, int epoch, size_t task_index) {
  return seed_mix(seed, 0x657069736f646573ULL, static_cast<uint64_t>(epoch),
                  static_cast<uint64_t>(task_index));
}

// --------------------------------------------------------------- meta update

MetaStepStats meta_update(ParameterSet& params, const std::vector<TaskClosures>& tasks,
                          double alpha, double beta, int inner_steps, bool first_order) {
  if (inner_steps < 0) throw std::invalid_argument("meta_update: negative inner_steps");
  if (tasks.empty()) throw std::invalid_argument("meta_update: no tasks");

  std::vector<size_t> trainable;
  for (size_t i = 0; i < params.entries().size(); ++i)
    if (params.entries()[i].trainable) trainable.push_back(i);

  std::vector<Tensor> meta_grad(trainable.size());
  for (size_t j = 0; j < trainable.size(); ++j)
    meta_grad[j] = Tensor::zeros(params.entries()[trainable[j]].tensor.shape());

  MetaStepStats stats;
  for (const TaskClosures& task : tasks) {
    // fresh trace per task so memory is bounded by one episode's graph
    Trace t;
    ParamVars theta = make_param_vars(t, params, /*trainable_only=*/true);
    std::vector<Var> theta_leaves;
    theta_leaves.reserve(theta.vars.size());
    for (const auto& [name, var] : theta.vars) theta_leaves.push_back(var);

    ParamVars cur = theta;
    for (int s = 0; s < inner_steps; ++s) {
      Var ls = task.support(t, cur);
      if (s == 0) stats.support_loss += ls.scalar();
      std::vector<Var> cur_leaves;
      cur_leaves.reserve(cur.vars.size());
      for (const auto& [name, var] : cur.vars) cur_leaves.push_back(var);
      GradientMap g = backward(ls, cur_leaves, first_order);
      ParamVars next;
      next.vars.reserve(cur.vars.size());
      for (const auto& [name, var] : cur.vars)
        next.vars.emplace_back(name, sub(var, mul_scalar(g.get_var(var), alpha)));
      cur = std::move(next);
    }
    if (inner_steps == 0) stats.support_loss += task.support(t, cur).scalar();

    Var lq = task.query(t, cur);
    stats.query_loss += lq.scalar();
    GradientMap gq = backward(lq, theta_leaves);
    for (size_t j = 0; j < trainable.size(); ++j) {
      Tensor g = gq.get(theta_leaves[j]);
      double* acc = meta_grad[j].mutable_data();
      for (long i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
  }

  for (size_t j = 0; j < trainable.size(); ++j) {
    const auto& e = params.entries()[trainable[j]];
    Tensor next = e.tensor.clone();
    double* d = next.mutable_data();
    const double* g = meta_grad[j].data();
    for (long i = 0; i < next.size(); ++i) d[i] -= beta * g[i];
    params.set(e.name, std::move(next));
  }

  const double nt = static_cast<double>(tasks.size());
  stats.support_loss /= nt;
  stats.query_loss /= nt;
  return stats;
}

// ------------------------------------------------------------- training loop

void update_running_stats(ParameterSet& params, const Tensor& batch_mean,
                          const Tensor& batch_var, double momentum) {
  auto blend = [&](const std::string& name, const Tensor& batch) {
    Tensor next = params.get(name).clone();
    double* d = next.mutable_data();
    for (long i = 0; i < next.size(); ++i)
      d[i] = (1.0 - momentum) * d[i] + momentum * batch[i];
    params.set(name, std::move(next));
  };
  blend("bn.running_mean", batch_mean);
  blend("bn.running_var", batch_var);
}

EpisodeSampler task_sampler(TaskData task, long n, long m) {
  return [task = std::move(task), n, m](uint64_t seed) {
    return sample_episode(task, n, m, seed);
  };
}

MetaStepStats meta_epoch(ParameterSet& params, const std::vector<EpisodeSampler>& tasks,
                         int epoch, const MetaConfig& mc, const ModelConfig& cfg,
                         const LossWeights& w) {
  std::vector<TaskClosures> closures;
  closures.reserve(tasks.size());
  for (size_t i = 0; i < tasks.size(); ++i) {
    auto ep = std::make_shared<Episode>(tasks[i](episode_seed(mc.seed, epoch, i)));
    auto stats_done = std::make_shared<bool>(false);
    TaskClosures tc;
    // support forward in train mode; the first call per episode also folds the
    // observed batch statistics into the running estimates
    tc.support = [ep, stats_done, &params, &cfg, &w](Trace& t, const ParamVars& pv) {
      ForwardOut out = forward(t, pv, params, ep->support_x, RunMode::kTrain, cfg);
      if (!*stats_done) {
        update_running_stats(params, out.bn_mean, out.bn_var, cfg.bn_momentum);
        *stats_done = true;
      }
      return weighted_loss(out, ep->support_y, w).total;
    };
    tc.query = [ep, &params, &cfg, &w](Trace& t, const ParamVars& pv) {
      ForwardOut out = forward(t, pv, params, ep->query_x, RunMode::kTrain, cfg);
      return weighted_loss(out, ep->query_y, w).total;
    };
    closures.push_back(std::move(tc));
  }
  return meta_update(params, closures, mc.alpha, mc.beta, mc.inner_steps, mc.first_order);
}

MetaStepStats meta_epoch(ParameterSet& params, const std::vector<TaskData>& tasks,
                         int epoch, const MetaConfig& mc, const ModelConfig& cfg,
                         const LossWeights& w) {
  std::vector<EpisodeSampler> samplers;
  samplers.reserve(tasks.size());
  for (const TaskData& t : tasks) samplers.push_back(task_sampler(t, mc.n_support, mc.m_query));
  return meta_epoch(params, samplers, epoch, mc, cfg, w);
}

std::vector<EpochLog> meta_train(ParameterSet& params, const std::vector<EpisodeSampler>& tasks,
                                 const MetaConfig& mc, const ModelConfig& cfg,
                                 const LossWeights& w) {
  if (mc.epochs < 0) throw std::invalid_argument("meta_train: negative epochs");
  std::ofstream log;
  if (!mc.log_path.empty()) {
    log.open(mc.log_path);
    if (!log) throw std::runtime_error("meta_train: cannot open log " + mc.log_path);
    log << "epoch,support_loss,query_loss,wall_s\n";
  }
  std::vector<EpochLog> out;
  out.reserve(static_cast<size_t>(mc.epochs));
  for (int e = 0; e < mc.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    MetaStepStats s = meta_epoch(params, tasks, e, mc, cfg, w);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochLog el{e, s.support_loss, s.query_loss, wall};
    out.push_back(el);
    if (log)
      log << el.epoch << ',' << el.support_loss << ',' << el.query_loss << ',' << el.wall_s
          << '\n';
    if (mc.checkpoint_every > 0 && !mc.checkpoint_dir.empty() &&
        (e + 1) % mc.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "params_epoch%04d.bin", e + 1);
      save_params(params, mc.checkpoint_dir + "/" + name);
    }
  }
  return out;
}

std::vector<EpochLog> meta_train(ParameterSet& params, const std::vector<TaskData>& tasks,
                                 const MetaConfig& mc, const ModelConfig& cfg,
                                 const LossWeights& w) {
  std::vector<EpisodeSampler> samplers;
  samplers.reserve(tasks.size());
  for (const TaskData& t : tasks) samplers.push_back(task_sampler(t, mc.n_support, mc.m_query));
  return meta_train(params, samplers, mc, cfg, w);
}

// ----------------------------------------------------------------- fine-tune

std::vector<double> fine_tune(ParameterSet& params, const Tensor& x, const BatchLabels& y,
                              const FineTuneConfig& ft, const ModelConfig& cfg,
                              const LossWeights& w,
                              const std::vector<std::string>& frozen) {
  if (ft.steps < 0) throw std::invalid_argument("fine_tune: negative steps");
  auto is_frozen = [&](const std::string& name) {
    for (const std::string& p : frozen)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  };

  std::vector<double> losses;
  losses.reserve(static_cast<size_t>(ft.steps) + 1);
  for (int s = 0; s < ft.steps; ++s) {
    Trace t;
    ParamVars pv = make_param_vars(t, params, /*trainable_only=*/true);
    ForwardOut out = forward(t, pv, params, x, RunMode::kTrain, cfg);
    Var loss = weighted_loss(out, y, w).total;
    losses.push_back(loss.scalar());

    std::vector<Var> leaves;
    std::vector<std::string> names;
    for (const auto& [name, var] : pv.vars) {
      if (is_frozen(name)) continue;
      leaves.push_back(var);
      names.push_back(name);
    }
    GradientMap g = backward(loss, leaves, /*detached=*/true);
    for (size_t j = 0; j < leaves.size(); ++j) {
      Tensor grad = g.get(leaves[j]);
      Tensor next = params.get(names[j]).clone();
      double* d = next.mutable_data();
      for (long i = 0; i < next.size(); ++i) d[i] -= ft.lr * grad[i];
      params.set(names[j], std::move(next));
    }
  }
  {  // loss at the final parameters
    Trace t;
    ParamVars pv = make_param_vars(t, params, /*trainable_only=*/true);
    ForwardOut out = forward(t, pv, params, x, RunMode::kTrain, cfg);
    losses.push_back(weighted_loss(out, y, w).total.scalar());
  }
  return losses;
}

}  // namespace mgait
