#pragma once

// Joint training objective: weighted sum of gait-phase cross-entropy, incline
// RMSE (degrees), and locomotion-mode cross-entropy, with fixed weights
// 0.6 / 0.2 / 0.2 shared by every training regime in this project.

#include <vector>

#include "mgait/network.hpp"
#include "mgait/trace.hpp"

namespace mgait {

struct LossWeights {
  double gait = 0.6;
  double incline = 0.2;
  double loc = 0.2;
};

struct BatchLabels {
  std::vector<int> gait;       // 0..n_phases-1
  std::vector<int> loc;        // 0..n_modes-1
  std::vector<double> incline; // degrees
};

// Mean negative log-likelihood, computed in log space (logsumexp with a
// constant max shift). labels.size() must equal the number of rows.
Var cross_entropy(Var logits, const std::vector<int>& labels);

// sqrt(mean((pred - target)^2)); the gradient at a zero radicand is 0.
Var rmse_loss(Var pred, const std::vector<double>& target);

struct LossBreakdown {
  Var total, gait, incline, loc;
};

// total = w_gait * CE_gait + w_incline * RMSE + w_loc * CE_loc, composed in
// exactly that order.
LossBreakdown weighted_loss(const ForwardOut& out, const BatchLabels& labels,
                            const LossWeights& w);

// The same composition on plain doubles (reporting, tests).
double combine_components(const LossWeights& w, double gait_ce, double incline_rmse,
                          double loc_ce);

}  // namespace mgait
