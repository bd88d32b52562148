#pragma once

// Naive, serial re-implementations of the hot kernels, the full model forward
// pass, and the loss components. Everything here is written as plain scalar
// loops with no shared code paths into the traced/OpenMP implementations, so
// tests can use it as an independent oracle. It is also what the kernel
// benchmark compares against.

#include <vector>

#include "mgait/network.hpp"
#include "mgait/objective.hpp"
#include "mgait/tensor.hpp"

namespace mgait::ref {

// Classic triple-loop matmul (i, j, k order).
Tensor matmul(const Tensor& a, const Tensor& b);

// Direct same-padded 1-d convolution: x [B,Cin,L], w [Cout,Cin,K] -> [B,Cout,L].
Tensor conv1d(const Tensor& x, const Tensor& w, long padding);

struct ForwardResult {
  Tensor loc_logits;   // [B, n_modes]
  Tensor gait_logits;  // [B, n_phases]
  Tensor incline;      // [B, 1]
};

// Scalar-loop forward pass with the same mathematical composition as the
// traced model (conv -> batch norm -> mean|last features -> encoder -> heads
// with mode-posterior feedback).
ForwardResult forward(const ParameterSet& params, const Tensor& batch, RunMode mode,
                      const ModelConfig& cfg);

// Loss components on plain arrays.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);
double rmse(const Tensor& pred, const std::vector<double>& target);
double weighted_loss(const ForwardResult& out, const BatchLabels& labels,
                     const LossWeights& w);

// weighted_loss(forward(...)) in one call; the finite-difference harness in
// the tests uses this for cheap loss evaluations at perturbed parameters.
double loss_at(const ParameterSet& params, const Tensor& batch, const BatchLabels& labels,
               const LossWeights& w, RunMode mode, const ModelConfig& cfg);

}  // namespace mgait::ref
