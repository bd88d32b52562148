#pragma once

// Reverse-mode automatic differentiation over an explicit operation trace.
//
// Every operation appends a record (kind, input ids, attributes, forward
// value) to a Trace. backward() walks the trace in reverse and *emits the
// vector-Jacobian products as new trace records*, so gradients are themselves
// differentiable values: calling backward on an expression built from
// gradients yields exact second-order derivatives (double backward).

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mgait/tensor.hpp"

namespace mgait {

enum class Op : uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kDivNz,      // a/b where b != 0, else 0
  kAddScalar,  // x + s
  kMulScalar,  // x * s
  kExp,
  kLog,
  kSqrt,
  kRelu,
  kMatMul,
  kTranspose,
  kReshape,
  kIm2col,       // [B,C,L] -> [B*Lout, C*K]   (i0=K, i1=P)
  kCol2im,       // adjoint of im2col          (i0=K, i1=P, i2=L)
  kConcatCols,   // [R,Ca],[R,Cb] -> [R,Ca+Cb]
  kSliceCols,    // columns [i0, i1)
  kPadCols,      // zero columns: i0 before, i1 after
  kRowSum,       // [R,C] -> [R,1]
  kColSum,       // [R,C] -> [1,C]
  kSumAll,       // -> [1]
  kBcastRow,     // [1,C] -> [R,C]  (i0=R)
  kBcastCol,     // [R,1] -> [R,C]  (i0=C)
  kBcastAll,     // [1] -> arbitrary shape
  kGroupRowSum,  // [G*L,C] -> [G,C]  (i0=L)
  kRepeatRows,   // [G,C] -> [G*L,C]  (i0=L)
  kPermute021,   // [a,b,c] -> [a,c,b]
};

const char* op_name(Op op);

struct OpAttrs {
  double s = 0.0;
  long i0 = 0, i1 = 0, i2 = 0;
};

struct TraceNode {
  Op op = Op::kLeaf;
  std::array<int, 2> in{-1, -1};
  OpAttrs attrs;
  Tensor value;
};

class Trace;

// Lightweight handle to a trace node.
struct Var {
  Trace* trace = nullptr;
  int id = -1;

  bool valid() const { return trace != nullptr && id >= 0; }
  const Tensor& value() const;
  const std::vector<long>& shape() const { return value().shape(); }
  double scalar() const;
};

class Trace {
 public:
  int emit(Op op, int in0, int in1, OpAttrs attrs, Tensor value);

  const TraceNode& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  long size() const { return static_cast<long>(nodes_.size()); }

  Var leaf(Tensor v);

  // Recompute the forward value of every non-leaf record from its inputs;
  // returns true when every recomputed value is bit-identical to the stored
  // one. Leaves are kept as recorded.
  bool replay_identical() const;

 private:
  std::vector<TraceNode> nodes_;
};

// ---------------------------------------------------------------- primitives

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var divide(Var a, Var b);
Var div_nz(Var a, Var b);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
Var vexp(Var a);
Var vlog(Var a);
Var vsqrt(Var a);
Var relu(Var a);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, std::vector<long> shape);
Var im2col(Var x, long K, long P);
Var col2im(Var cols, long K, long P, long L);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, long lo, long hi);
Var pad_cols(Var a, long before, long after);
Var row_sum(Var a);
Var col_sum(Var a);
Var sum_all(Var a);
Var bcast_row(Var v, long rows);
Var bcast_col(Var v, long cols);
Var bcast_all(Var s, std::vector<long> shape);
Var group_row_sum(Var a, long group_len);
Var repeat_rows(Var a, long rep);
Var permute021(Var a);

// ---------------------------------------------------------------- composites

Var square(Var a);                       // x*x
Var mean_all(Var a);                     // sum/N
Var neg(Var a);                          // -x
Var softmax_rows(Var logits);            // rowwise, max-shifted for stability
Var conv1d(Var x, Var w, long padding);  // x[B,Cin,L], w[Cout,Cin,K] -> [B,Cout,Lout]

// Batch normalization over rows of a [R,C] matrix (one statistic per column).
// Train mode normalizes by batch statistics and optionally reports them;
// eval mode uses the provided running statistics.
Var batchnorm_train(Var x, Var gamma, Var beta, double eps,
                    Tensor* batch_mean = nullptr, Tensor* batch_var = nullptr);
Var batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                   const Tensor& running_var, double eps);
// Channel-wise batch norm over [B,C,L] (statistics over batch and time).
Var batchnorm1d_train(Var x, Var gamma, Var beta, double eps,
                      Tensor* batch_mean = nullptr, Tensor* batch_var = nullptr);

// ------------------------------------------------------------------ backward

class GradientMap {
 public:
  // Gradient of the scalar w.r.t. the given leaf; zeros if disconnected.
  Tensor get(Var leaf) const;
  // Same, as a differentiable trace variable (for second-order use).
  Var get_var(Var leaf) const;

  void set(int leaf_id, Var grad) { grads_[leaf_id] = grad; }
  bool contains(int leaf_id) const { return grads_.count(leaf_id) > 0; }

 private:
  std::unordered_map<int, Var> grads_;
};

// Reverse-mode gradient of a scalar ([1]-shaped) variable with respect to
// `leaves`. The VJP chain is emitted onto the same trace, so the returned
// gradients are differentiable (grad-of-grad works by calling backward again).
// When `detached` is true the gradients are re-inserted as fresh leaves,
// cutting the second-order path (first-order approximation).
GradientMap backward(Var scalar_out, const std::vector<Var>& leaves, bool detached = false);

}  // namespace mgait
