#pragma once

// Model-agnostic meta-learning over per-subject tasks.
//
// One meta-update per epoch: every task adapts a traced copy of the shared
// parameters with a few inner gradient steps on its support set, the adapted
// parameters are scored on the task's query set, and the sum of the query
// gradients with respect to the *original* parameters (differentiating through
// the inner steps) drives a single outer step. Setting `first_order` detaches
// the inner gradients, which drops the curvature term.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mgait/network.hpp"
#include "mgait/objective.hpp"

namespace mgait {

// ------------------------------------------------------------------ episodes

// A task is the pool of labeled windows belonging to one subject.
struct TaskData {
  Tensor windows;  // [N, channels, window_len]
  BatchLabels labels;
};

struct Episode {
  Tensor support_x;
  BatchLabels support_y;
  Tensor query_x;
  BatchLabels query_y;
};

// Rows of `task` selected by `idx`, in the given order.
TaskData subset(const TaskData& task, const std::vector<long>& idx);

// Disjoint support/query split: a seeded shuffle of the task's windows takes
// the first n as support and the next m as query. Throws if n + m exceeds the
// pool or either side is empty.
Episode sample_episode(const TaskData& task, long n, long m, uint64_t seed);

// Tasks are presented to the training loop as episode factories, so callers
// can materialize window tensors lazily (a subject's full pool can be large).
using EpisodeSampler = std::function<Episode(uint64_t seed)>;

// Sampler over an in-memory task (shares the task's buffers).
EpisodeSampler task_sampler(TaskData task, long n, long m);

// --------------------------------------------------------------- meta update

// A task-loss closure builds the scalar training objective for one batch on
// the caller's trace, reading parameters from the supplied vars.
using EpisodeLoss = std::function<Var(Trace&, const ParamVars&)>;

struct TaskClosures {
  EpisodeLoss support;
  EpisodeLoss query;
};

struct MetaStepStats {
  double support_loss = 0.0;  // mean pre-adaptation support loss over tasks
  double query_loss = 0.0;    // mean post-adaptation query loss over tasks
};

// One outer step over all tasks (see the header comment). Gradients are
// accumulated in task order; only trainable entries move.
MetaStepStats meta_update(ParameterSet& params, const std::vector<TaskClosures>& tasks,
                          double alpha, double beta, int inner_steps, bool first_order);

// ------------------------------------------------------------- training loop

struct MetaConfig {
  double alpha = 0.01;       // inner step size
  double beta = 1e-4;        // outer step size
  int inner_steps = 1;
  int epochs = 200;
  long n_support = 80;       // support windows per episode
  long m_query = 120;        // query windows per episode
  bool first_order = false;
  uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 disables
  std::string checkpoint_dir;
  std::string log_path;      // per-epoch CSV; empty disables
};

struct EpochLog {
  int epoch = 0;
  double support_loss = 0.0;
  double query_loss = 0.0;
  double wall_s = 0.0;
};

// One meta-update on freshly resampled episodes (seeded by epoch and task
// index). Batch-norm running statistics are EMA-updated from each task's
// first support forward, in task order.
MetaStepStats meta_epoch(ParameterSet& params, const std::vector<EpisodeSampler>& tasks,
                         int epoch, const MetaConfig& mc, const ModelConfig& cfg,
                         const LossWeights& w);
MetaStepStats meta_epoch(ParameterSet& params, const std::vector<TaskData>& tasks,
                         int epoch, const MetaConfig& mc, const ModelConfig& cfg,
                         const LossWeights& w);

// Full meta-training: `epochs` meta-updates with per-epoch logging and
// optional checkpoints (params_epochNNNN.bin under checkpoint_dir).
std::vector<EpochLog> meta_train(ParameterSet& params, const std::vector<EpisodeSampler>& tasks,
                                 const MetaConfig& mc, const ModelConfig& cfg,
                                 const LossWeights& w);
std::vector<EpochLog> meta_train(ParameterSet& params, const std::vector<TaskData>& tasks,
                                 const MetaConfig& mc, const ModelConfig& cfg,
                                 const LossWeights& w);

// ----------------------------------------------------------------- fine-tune

struct FineTuneConfig {
  double lr = 3e-4;
  int steps = 4;
};

// Plain SGD on the weighted loss over one calibration batch. Entries whose
// name starts with any prefix in `frozen` are left untouched, as are the
// batch-norm running statistics. Returns the loss before each step plus the
// final loss (steps + 1 values).
std::vector<double> fine_tune(ParameterSet& params, const Tensor& x, const BatchLabels& y,
                              const FineTuneConfig& ft, const ModelConfig& cfg,
                              const LossWeights& w,
                              const std::vector<std::string>& frozen = {});

// running <- (1 - momentum) * running + momentum * batch
void update_running_stats(ParameterSet& params, const Tensor& batch_mean,
                          const Tensor& batch_var, double momentum);

// Seed for the episode drawn by task `task_index` in epoch `epoch`.
uint64_t episode_seed(uint64_t seed, int epoch, size_t task_index);

}  // namespace mgait
