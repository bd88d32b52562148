#include "mgait/objective.hpp"

#include <stdexcept>
#include <string>

namespace mgait {

// -------------------------------------------------------------------------
// cross entropy

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be 2-d");
  const int b = static_cast<int>(lv.dim(0)), k = static_cast<int>(lv.dim(1));
  if (static_cast<int>(labels.size()) != b)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(b) + " rows");
  Trace& tr = *logits.trace;

  // log-softmax denominator: logsumexp with a constant per-row max shift.
  Tensor mx = Tensor::zeros({b, 1});
  for (int i = 0; i < b; ++i) {
    const double* row = lv.data() + static_cast<long>(i) * k;
    double m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    mx.mutable_data()[i] = m;
  }
  Var shifted = sub(logits, bcast_col(tr.leaf(mx), k));
  Var lse = add(vlog(row_sum(vexp(shifted))), tr.leaf(mx));  // [b,1]

  // picked logit per row: rowwise sum of logits * onehot(label).
  Tensor onehot = Tensor::zeros({b, k});
  for (int i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= k)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                  " out of range [0," + std::to_string(k) + ")");
    onehot.mutable_data()[static_cast<long>(i) * k + y] = 1.0;
  }
  Var picked = row_sum(mul(logits, tr.leaf(onehot)));  // [b,1]

  Var nll = sub(lse, picked);                     // [b,1]
  return mul_scalar(sum_all(nll), 1.0 / b);
}

// -------------------------------------------------------------------------
// incline RMSE

Var rmse_loss(Var pred, const std::vector<double>& target) {
  const Tensor& pv = pred.value();
  if (pv.rank() != 2 || pv.dim(1) != 1)
    throw std::invalid_argument("rmse_loss: pred must be [n,1], got " + shape_str(pv.shape()));
  const int n = static_cast<int>(pv.dim(0));
  if (static_cast<int>(target.size()) != n)
    throw std::invalid_argument("rmse_loss: " + std::to_string(target.size()) +
                                " targets for " + std::to_string(n) + " rows");
  Trace& tr = *pred.trace;
  Tensor tgt = Tensor::zeros({n, 1});
  for (int i = 0; i < n; ++i) tgt.mutable_data()[i] = target[i];
  Var diff = sub(pred, tr.leaf(tgt));
  Var mse = mul_scalar(sum_all(mul(diff, diff)), 1.0 / n);
  return vsqrt(mse);  // subgradient 0 at a zero radicand
}

// -------------------------------------------------------------------------
// weighted combination

LossBreakdown weighted_loss(const ForwardOut& out, const BatchLabels& labels,
                            const LossWeights& w) {
  LossBreakdown b;
  b.gait = cross_entropy(out.gait_logits, labels.gait);
  b.incline = rmse_loss(out.incline, labels.incline);
  b.loc = cross_entropy(out.loc_logits, labels.loc);
  b.total = add(add(mul_scalar(b.gait, w.gait), mul_scalar(b.incline, w.incline)),
                mul_scalar(b.loc, w.loc));
  return b;
}

double combine_components(const LossWeights& w, double gait_ce, double incline_rmse,
                          double loc_ce) {
  return (gait_ce * w.gait + incline_rmse * w.incline) + loc_ce * w.loc;
}

}  // namespace mgait
