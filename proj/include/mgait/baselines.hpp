#pragma once

// Conventional training regimes the meta-learned model is compared against:
//
//   RI  - random init: fresh parameters, fine-tuned on the calibration batch
//   DE  - direct eval: the pooled-pretrained model used as-is (no adaptation)
//   TL  - transfer: pretrained model with the convolutional front end and its
//         batch norm frozen, remaining layers fine-tuned
//   SFT - subject fine-tune: pretrained model, every layer fine-tuned
//
// Pretraining pools every training subject's windows and minimizes the same
// weighted objective with mini-batch Adam.

#include <cstdint>
#include <string>
#include <vector>

#include "mgait/meta.hpp"

namespace mgait {

// ---------------------------------------------------------------------- adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment estimates for each trainable entry, in entry order.
struct AdamState {
  std::vector<std::string> names;
  std::vector<Tensor> m, v;
  long t = 0;
};

AdamState make_adam_state(const ParameterSet& params);

// One bias-corrected update; `grads` aligns with state.names.
void adam_step(ParameterSet& params, AdamState& state, const std::vector<Tensor>& grads,
               const AdamConfig& ac);

// ---------------------------------------------------------------- pretraining

struct PretrainConfig {
  AdamConfig adam;             // adam.lr defaults to 1e-3
  long batch = 200;
  int epochs = 50;
  uint64_t seed = 0;
  int max_batches_per_epoch = 0;  // 0 = every batch
  std::string log_path;           // per-epoch CSV; empty disables
};

struct PretrainLog {
  int epoch = 0;
  double mean_loss = 0.0;
  int batches = 0;
  double wall_s = 0.0;
};

// A window pool the trainer can draw from without holding every window in
// memory: `fetch` materializes the rows named by pool indices.
struct PoolSource {
  long size = 0;
  std::function<TaskData(const std::vector<long>&)> fetch;
};

PoolSource pool_source(TaskData pool);  // in-memory adapter

// Mini-batch Adam over a seeded reshuffle of the pool each epoch (final short
// batch included). Batch-norm running statistics are EMA-updated per batch.
std::vector<PretrainLog> pretrain(ParameterSet& params, const PoolSource& pool,
                                  const PretrainConfig& pc, const ModelConfig& cfg,
                                  const LossWeights& w);
std::vector<PretrainLog> pretrain(ParameterSet& params, const TaskData& pool,
                                  const PretrainConfig& pc, const ModelConfig& cfg,
                                  const LossWeights& w);

// ------------------------------------------------------------------- regimes

enum class BaselineKind { kRI, kDE, kTL, kSFT };

const char* baseline_name(BaselineKind k);           // "RI" / "DE" / "TL" / "SFT"
double default_ft_lr(BaselineKind k);                 // RI 1.5e-4, TL 8e-4, SFT 1e-6
std::vector<std::string> frozen_prefixes(BaselineKind k);

// Produce the deployed parameters for one subject: start from a fresh init
// (RI, seeded by ri_seed) or a copy of `pretrained`, then fine-tune on the
// calibration batch with the regime's freeze list. DE rejects ft.steps > 0;
// pass steps = 0 and it returns the pretrained parameters unchanged.
ParameterSet run_baseline(BaselineKind kind, const ParameterSet& pretrained,
                          const Tensor& cal_x, const BatchLabels& cal_y,
                          const FineTuneConfig& ft, const ModelConfig& cfg,
                          const LossWeights& w, uint64_t ri_seed = 0);

}  // namespace mgait
