#pragma once

// Multi-head estimator: a shared 1-D conv + batch-norm feature extractor over
// [B, channels, window] sensor windows, a ReLU linear encoder on pooled
// features, and three heads — locomotion-mode logits, gait-phase logits (fed
// the mode posterior), and a scalar incline regression in degrees.
//
// Temporal aggregation concatenates the per-channel average over the window
// with the activations at the final frame: the average alone is invariant to
// where a full gait cycle ends, so the final-frame slice carries the phase
// information the label refers to.

#include <string>
#include <vector>

#include "mgait/tensor.hpp"
#include "mgait/trace.hpp"

namespace mgait {

struct ModelConfig {
  long in_channels = 4;
  long window_len = 100;   // frames per window (100 Hz -> 1 s)
  long conv_channels = 16;
  long conv_kernel = 9;    // odd; zero-padded "same"
  long encoder_width = 64;
  long head_width = 32;
  long n_modes = 5;
  long n_phases = 4;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;  // EMA weight for running statistics

  void validate() const;
};

// Named, ordered tensor container. Iteration order is the canonical parameter
// order used by initialization and serialization.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  void add(std::string name, Tensor t, bool trainable = true);
  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  void set(const std::string& name, Tensor t);  // shape must be unchanged

  const std::vector<Entry>& entries() const { return entries_; }
  long total_values() const;

 private:
  std::vector<Entry> entries_;
  long index_of(const std::string& name) const;
};

bool bits_equal(const ParameterSet& a, const ParameterSet& b);
bool bits_equal(const Tensor& a, const Tensor& b);

// Seed-deterministic initialization: weights uniform in +-sqrt(1/fan_in),
// biases zero, bn gamma 1 / beta 0, running stats (0, 1).
ParameterSet init_params(const ModelConfig& cfg, uint64_t seed);

long count_params(const ModelConfig& cfg);  // trainable values only

// Parameters registered as leaves on a trace, in canonical order.
struct ParamVars {
  std::vector<std::pair<std::string, Var>> vars;
  Var get(const std::string& name) const;
  bool has(const std::string& name) const;
};

ParamVars make_param_vars(Trace& t, const ParameterSet& params, bool trainable_only = false);

enum class RunMode { kTrain, kEval };

struct ForwardOut {
  Var loc_logits;   // [B, n_modes]
  Var gait_logits;  // [B, n_phases]
  Var incline;      // [B, 1], degrees
  Tensor bn_mean;   // batch statistics (train mode only), [1, conv_channels]
  Tensor bn_var;
};

/// Pure function of (params, batch): no state is mutated. Train mode
// normalizes by batch statistics (and reports them); eval mode uses the
// running statistics stored in the parameter set.
ForwardOut forward(Trace& t, const ParamVars& params, const ParameterSet& state,
                   const Tensor& batch, RunMode mode, const ModelConfig& cfg);

struct Predictions {
  std::vector<int> gait;
  std::vector<int> loc;
  std::vector<double> incline;
};

// Argmax per row; ties resolve to the lowest index.
Predictions predict(const Tensor& gait_logits, const Tensor& loc_logits, const Tensor& incline);
int argmax_row(const Tensor& logits, long row);

// Flat binary container with a JSON header (name, shape, offset, trainable),
// magic "MGAIT1". Round-trips bit-identically.
void save_params(const ParameterSet& params, const std::string& path);
ParameterSet load_params(const std::string& path);

}  // namespace mgait
