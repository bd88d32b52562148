#pragma once

// Leave-one-subject-out evaluation of the meta-learned model against the
// baseline regimes, over calibration-budget scenarios:
//
//   S1 - calibration duration sweep at a fixed adaptation-step count
//   S2 - adaptation-step sweep at a fixed calibration duration
//   S3 - the single deployment operating point
//
// Per held-out subject the calibration set is the first `duration` seconds of
// one session per (mode, speed) condition — the session with the smallest
// incline magnitude, first repeat. Query windows are every other window of
// that subject, excluding windows that touch the first max-duration seconds
// of any calibration session (so the query set is identical across the
// durations of a scenario). Methods never see the held-out subject during
// (meta-)training.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mgait/baselines.hpp"
#include "mgait/meta.hpp"
#include "mgait/synthgait.hpp"

namespace mgait {

// ----------------------------------------------------------------- metrics

struct CI {
  double mean = 0.0;
  double half = 0.0;  // 1.96 * unbiased sd / sqrt(n)
  long n = 0;
};

// Throws unless values.size() >= 2.
CI confidence_interval(const std::vector<double>& values);

// Per-window predictions over a reference list, computed in eval mode.
struct EvalOutputs {
  std::vector<int> gait;
  std::vector<int> loc;
  std::vector<double> incline;
};

EvalOutputs predict_windows(const ParameterSet& params, const ModelConfig& cfg,
                            const Dataset& ds, const std::vector<WindowRef>& refs,
                            long batch_cap = 512);

struct Metrics {
  double gait_acc = 0.0;
  double loc_acc = 0.0;
  double incline_rmse = 0.0;
  long n = 0;
  std::vector<long> confusion;  // phases x phases, row true, col predicted
};

// Score predictions against the references' labels; `mode_filter` < 0 scores
// everything, kNumModes selects the stair pool (SA and SD together).
inline constexpr int kAllModes = -1;
inline constexpr int kStairModes = kNumModes;
Metrics score_predictions(const EvalOutputs& pred, const Dataset& ds,
                          const std::vector<WindowRef>& refs, int mode_filter);

// --------------------------------------------------------------- scenarios

struct ScenarioSpec {
  std::string name;
  std::vector<double> durations_s;
  std::vector<int> steps;
};

// S1: durations 1.5..3.5 at 4 steps; S2: 0..4 steps at 3.5 s; S3: (3.5 s, 4).
ScenarioSpec scenario_spec(const std::string& name);

// ------------------------------------------------------------------ harness

struct HarnessConfig {
  ModelConfig model;
  LossWeights weights;
  MetaConfig meta;          // meta.seed is re-derived per fold and repeat
  PretrainConfig pretrain;  // pretrain.seed likewise
  std::string scenario = "S3";
  std::vector<std::string> methods = {"MAML", "RI", "DE", "TL", "SFT"};
  double maml_ft_lr = 3e-4;
  double ri_ft_lr = 1.5e-4;
  double tl_ft_lr = 8e-4;
  double sft_ft_lr = 1e-6;
  long window_stride = 10;   // training and calibration pools
  long eval_stride_mult = 1; // query pool uses window_stride times this
  int repeat_seeds = 5;      // full retrains per fold
  uint64_t seed = 0;         // master seed for init/meta/pretrain derivations
  std::vector<int> folds;    // held-out subjects; empty = every subject
  // optional grid overrides: S1's durations are a free list (steps stay 4);
  // S2's steps are a free list (duration stays 3.5 s); S3 is fixed
  std::vector<double> s1_durations;
  std::vector<int> s2_steps;
};

struct ResultRow {
  std::string method;
  int subject = 0;  // -1 on rows aggregated over subjects
  std::string mode;  // ALL, LW, RA, RD, SA, SD, STAIRS
  std::string metric;  // gait_acc, loc_acc, incline_rmse
  double value = 0.0;
  double ci = 0.0;  // half-width; 0 on raw per-seed rows
  double duration_s = 0.0;
  int steps = 0;
  int seed = 0;  // repeat index; -1 on rows aggregated over repeats
};

struct HarnessResult {
  ScenarioSpec scenario;
  std::vector<ResultRow> rows;
  // per method: gait confusion pooled over folds and repeats at the headline
  // cell (duration 3.5 s; 2 steps when the grid has it, else the largest)
  std::map<std::string, std::vector<long>> confusion;
  double headline_duration = 0.0;
  int headline_steps = 0;
  double wall_s = 0.0;
};

// Meta-learning task pools: one window pool per walking condition
// (subject x mode x speed x incline), in deterministic key order.
// exclude_subject drops one subject's sessions (-1 keeps everyone).
std::vector<std::vector<WindowRef>> condition_pools(const Dataset& ds, long k, long stride,
                                                    int exclude_subject = -1);

// Calibration window refs for one subject at one duration, and the matching
// query refs (exposed for tests; run_loso uses the same selection).
std::vector<WindowRef> calibration_refs(const Dataset& ds, int subject, double duration_s,
                                        long k, long stride);
std::vector<WindowRef> query_refs(const Dataset& ds, int subject, double max_duration_s,
                                  long k, long stride);

HarnessResult run_loso(const Dataset& ds, const HarnessConfig& hc);

// results.csv, confusion.csv, summary.json under out_dir.
void emit_report(const HarnessResult& hr, const HarnessConfig& hc, const std::string& out_dir);

}  // namespace mgait
