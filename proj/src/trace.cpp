#include "mgait/trace.hpp"

#include <cmath>
#include <cstring>

#include "mgait/kernels.hpp"

namespace mgait {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kDivNz: return "div_nz";
    case Op::kAddScalar: return "add_scalar";
    case Op::kMulScalar: return "mul_scalar";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kRelu: return "relu";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kIm2col: return "im2col";
    case Op::kCol2im: return "col2im";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCols: return "slice_cols";
    case Op::kPadCols: return "pad_cols";
    case Op::kRowSum: return "row_sum";
    case Op::kColSum: return "col_sum";
    case Op::kSumAll: return "sum_all";
    case Op::kBcastRow: return "bcast_row";
    case Op::kBcastCol: return "bcast_col";
    case Op::kBcastAll: return "bcast_all";
    case Op::kGroupRowSum: return "group_row_sum";
    case Op::kRepeatRows: return "repeat_rows";
    case Op::kPermute021: return "permute021";
  }
  return "?";
}

const Tensor& Var::value() const { return trace->node(id).value; }

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw std::invalid_argument("Var::scalar: not a scalar");
  return v[0];
}

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string("shape mismatch in ") + op + ": " + detail);
}

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) shape_error(op, detail);
}

// Forward evaluation of a primitive from input tensors. Shared by the op
// builders and by Trace::replay_identical.
Tensor eval_op(Op op, const Tensor& a, const Tensor& b, const OpAttrs& at,
               const std::vector<long>& out_shape) {
  using namespace kernels;
  Tensor y = Tensor::zeros(out_shape);
  const long n = y.size();
  switch (op) {
    case Op::kLeaf:
      throw std::logic_error("eval_op on leaf");
    case Op::kAdd: ew_add(a.data(), b.data(), y.mutable_data(), n); break;
    case Op::kSub: ew_sub(a.data(), b.data(), y.mutable_data(), n); break;
    case Op::kMul: ew_mul(a.data(), b.data(), y.mutable_data(), n); break;
    case Op::kDiv: ew_div(a.data(), b.data(), y.mutable_data(), n); break;
    case Op::kDivNz: ew_divnz(a.data(), b.data(), y.mutable_data(), n); break;
    case Op::kAddScalar: ew_axpb(a.data(), 1.0, at.s, y.mutable_data(), n); break;
    case Op::kMulScalar: ew_axpb(a.data(), at.s, 0.0, y.mutable_data(), n); break;
    case Op::kExp: ew_exp(a.data(), y.mutable_data(), n); break;
    case Op::kLog: ew_log(a.data(), y.mutable_data(), n); break;
    case Op::kSqrt: ew_sqrt(a.data(), y.mutable_data(), n); break;
    case Op::kRelu: ew_relu(a.data(), y.mutable_data(), n); break;
    case Op::kMatMul:
      matmul(a.data(), b.data(), y.mutable_data(), a.dim(0), a.dim(1), b.dim(1));
      break;
    case Op::kTranspose:
      transpose(a.data(), y.mutable_data(), a.dim(0), a.dim(1));
      break;
    case Op::kReshape:
      std::memcpy(y.mutable_data(), a.data(), static_cast<size_t>(n) * sizeof(double));
      break;
    case Op::kIm2col:
      im2col(a.data(), y.mutable_data(), a.dim(0), a.dim(1), a.dim(2), at.i0, at.i1);
      break;
    case Op::kCol2im:
      col2im(a.data(), y.mutable_data(), out_shape[0], out_shape[1], out_shape[2], at.i0, at.i1);
      break;
    case Op::kConcatCols: {
      const long r = a.dim(0), ca = a.dim(1), cb = b.dim(1);
      double* yd = y.mutable_data();
      for (long i = 0; i < r; ++i) {
        std::memcpy(yd + i * (ca + cb), a.data() + i * ca, static_cast<size_t>(ca) * sizeof(double));
        std::memcpy(yd + i * (ca + cb) + ca, b.data() + i * cb, static_cast<size_t>(cb) * sizeof(double));
      }
      break;
    }
    case Op::kSliceCols: {
      const long r = a.dim(0), c = a.dim(1), lo = at.i0, w = at.i1 - at.i0;
      double* yd = y.mutable_data();
      for (long i = 0; i < r; ++i)
        std::memcpy(yd + i * w, a.data() + i * c + lo, static_cast<size_t>(w) * sizeof(double));
      break;
    }
    case Op::kPadCols: {
      const long r = a.dim(0), c = a.dim(1), before = at.i0, w = before + c + at.i1;
      double* yd = y.mutable_data();
      for (long i = 0; i < r; ++i)
        std::memcpy(yd + i * w + before, a.data() + i * c, static_cast<size_t>(c) * sizeof(double));
      break;
    }
    case Op::kRowSum: row_sum(a.data(), y.mutable_data(), a.dim(0), a.dim(1)); break;
    case Op::kColSum: col_sum(a.data(), y.mutable_data(), a.dim(0), a.dim(1)); break;
    case Op::kSumAll: y.mutable_data()[0] = sum_all(a.data(), a.size()); break;
    case Op::kBcastRow: bcast_row(a.data(), y.mutable_data(), at.i0, a.dim(1)); break;
    case Op::kBcastCol: bcast_col(a.data(), y.mutable_data(), a.dim(0), at.i0); break;
    case Op::kBcastAll: {
      const double v = a[0];
      double* yd = y.mutable_data();
      for (long i = 0; i < n; ++i) yd[i] = v;
      break;
    }
    case Op::kGroupRowSum: {
      const long groups = out_shape[0], gl = at.i0, c = a.dim(1);
      double* yd = y.mutable_data();
      for (long gidx = 0; gidx < groups; ++gidx)
        for (long j = 0; j < c; ++j) {
          double s = 0.0;
          for (long l = 0; l < gl; ++l) s += a.data()[(gidx * gl + l) * c + j];
          yd[gidx * c + j] = s;
        }
      break;
    }
    case Op::kRepeatRows: {
      const long groups = a.dim(0), rep = at.i0, c = a.dim(1);
      double* yd = y.mutable_data();
      for (long gidx = 0; gidx < groups; ++gidx)
        for (long l = 0; l < rep; ++l)
          std::memcpy(yd + (gidx * rep + l) * c, a.data() + gidx * c,
                      static_cast<size_t>(c) * sizeof(double));
      break;
    }
    case Op::kPermute021:
      permute021(a.data(), y.mutable_data(), a.dim(0), a.dim(1), a.dim(2));
      break;
  }
  return y;
}

}  // namespace

int Trace::emit(Op op, int in0, int in1, OpAttrs attrs, Tensor value) {
  if (!kernels::all_finite(value.data(), value.size()))
    throw std::runtime_error(std::string("non-finite value produced by ") + op_name(op));
  nodes_.push_back(TraceNode{op, {in0, in1}, attrs, std::move(value)});
  return static_cast<int>(nodes_.size()) - 1;
}

Var Trace::leaf(Tensor v) {
  if (v.empty()) throw std::invalid_argument("leaf: empty tensor");
  int id = emit(Op::kLeaf, -1, -1, OpAttrs{}, std::move(v));
  return Var{this, id};
}

bool Trace::replay_identical() const {
  for (const TraceNode& n : nodes_) {
    if (n.op == Op::kLeaf) continue;
    const Tensor& a = nodes_[static_cast<size_t>(n.in[0])].value;
    static const Tensor kNone;
    const Tensor& b = n.in[1] >= 0 ? nodes_[static_cast<size_t>(n.in[1])].value : kNone;
    Tensor redo = eval_op(n.op, a, b, n.attrs, n.value.shape());
    if (redo.size() != n.value.size()) return false;
    if (std::memcmp(redo.data(), n.value.data(),
                    static_cast<size_t>(redo.size()) * sizeof(double)) != 0)
      return false;
  }
  return true;
}

// ------------------------------------------------------------- op builders

namespace {

Trace& same_trace(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || a.trace != b.trace)
    throw std::invalid_argument(std::string(op) + ": operands from different traces");
  return *a.trace;
}

Var emit1(Var a, Op op, OpAttrs at, std::vector<long> out_shape) {
  Tensor y = eval_op(op, a.value(), Tensor(), at, out_shape);
  return Var{a.trace, a.trace->emit(op, a.id, -1, at, std::move(y))};
}

Var emit2(Var a, Var b, Op op, OpAttrs at, std::vector<long> out_shape) {
  Tensor y = eval_op(op, a.value(), b.value(), at, out_shape);
  return Var{a.trace, a.trace->emit(op, a.id, b.id, at, std::move(y))};
}

Var ew_binary(Var a, Var b, Op op, const char* name) {
  same_trace(a, b, name);
  require(a.value().same_shape(b.value()), name,
          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return emit2(a, b, op, {}, a.shape());
}

void require_2d(Var a, const char* name) {
  require(a.value().rank() == 2, name, "expected rank-2, got " + shape_str(a.shape()));
}

}  // namespace

Var add(Var a, Var b) { return ew_binary(a, b, Op::kAdd, "add"); }
Var sub(Var a, Var b) { return ew_binary(a, b, Op::kSub, "sub"); }
Var mul(Var a, Var b) { return ew_binary(a, b, Op::kMul, "mul"); }
Var divide(Var a, Var b) { return ew_binary(a, b, Op::kDiv, "div"); }
Var div_nz(Var a, Var b) { return ew_binary(a, b, Op::kDivNz, "div_nz"); }

Var add_scalar(Var a, double s) { return emit1(a, Op::kAddScalar, OpAttrs{s}, a.shape()); }
Var mul_scalar(Var a, double s) { return emit1(a, Op::kMulScalar, OpAttrs{s}, a.shape()); }
Var vexp(Var a) { return emit1(a, Op::kExp, {}, a.shape()); }
Var vlog(Var a) { return emit1(a, Op::kLog, {}, a.shape()); }
Var vsqrt(Var a) { return emit1(a, Op::kSqrt, {}, a.shape()); }
Var relu(Var a) { return emit1(a, Op::kRelu, {}, a.shape()); }

Var matmul(Var a, Var b) {
  same_trace(a, b, "matmul");
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  require(a.value().dim(1) == b.value().dim(0), "matmul",
          shape_str(a.shape()) + " x " + shape_str(b.shape()));
  return emit2(a, b, Op::kMatMul, {}, {a.value().dim(0), b.value().dim(1)});
}

Var transpose(Var a) {
  require_2d(a, "transpose");
  return emit1(a, Op::kTranspose, {}, {a.value().dim(1), a.value().dim(0)});
}

Var reshape(Var a, std::vector<long> shape) {
  require(Tensor::count(shape) == a.value().size(), "reshape",
          shape_str(a.shape()) + " -> " + shape_str(shape));
  return emit1(a, Op::kReshape, {}, std::move(shape));
}

Var im2col(Var x, long K, long P) {
  require(x.value().rank() == 3, "im2col", "expected [B,C,L], got " + shape_str(x.shape()));
  require(K >= 1 && P >= 0, "im2col", "bad kernel/padding");
  const long B = x.value().dim(0), C = x.value().dim(1), L = x.value().dim(2);
  const long lout = L + 2 * P - K + 1;
  require(lout >= 1, "im2col", "kernel wider than padded input");
  return emit1(x, Op::kIm2col, OpAttrs{0.0, K, P}, {B * lout, C * K});
}

Var col2im(Var cols, long K, long P, long L) {
  require_2d(cols, "col2im");
  const long lout = L + 2 * P - K + 1;
  require(lout >= 1 && cols.value().dim(0) % lout == 0, "col2im", "rows not divisible by Lout");
  require(cols.value().dim(1) % K == 0, "col2im", "cols not divisible by K");
  const long B = cols.value().dim(0) / lout, C = cols.value().dim(1) / K;
  return emit1(cols, Op::kCol2im, OpAttrs{0.0, K, P, L}, {B, C, L});
}

Var concat_cols(Var a, Var b) {
  same_trace(a, b, "concat_cols");
  require_2d(a, "concat_cols");
  require_2d(b, "concat_cols");
  require(a.value().dim(0) == b.value().dim(0), "concat_cols",
          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return emit2(a, b, Op::kConcatCols, {}, {a.value().dim(0), a.value().dim(1) + b.value().dim(1)});
}

Var slice_cols(Var a, long lo, long hi) {
  require_2d(a, "slice_cols");
  require(0 <= lo && lo < hi && hi <= a.value().dim(1), "slice_cols", "bad column range");
  return emit1(a, Op::kSliceCols, OpAttrs{0.0, lo, hi}, {a.value().dim(0), hi - lo});
}

Var pad_cols(Var a, long before, long after) {
  require_2d(a, "pad_cols");
  require(before >= 0 && after >= 0, "pad_cols", "negative padding");
  if (before == 0 && after == 0) return a;
  return emit1(a, Op::kPadCols, OpAttrs{0.0, before, after},
               {a.value().dim(0), before + a.value().dim(1) + after});
}

Var row_sum(Var a) {
  require_2d(a, "row_sum");
  return emit1(a, Op::kRowSum, {}, {a.value().dim(0), 1});
}

Var col_sum(Var a) {
  require_2d(a, "col_sum");
  return emit1(a, Op::kColSum, {}, {1, a.value().dim(1)});
}

Var sum_all(Var a) { return emit1(a, Op::kSumAll, {}, {1}); }

Var bcast_row(Var v, long rows) {
  require_2d(v, "bcast_row");
  require(v.value().dim(0) == 1 && rows >= 1, "bcast_row", "expected [1,C]");
  return emit1(v, Op::kBcastRow, OpAttrs{0.0, rows}, {rows, v.value().dim(1)});
}

Var bcast_col(Var v, long cols) {
  require_2d(v, "bcast_col");
  require(v.value().dim(1) == 1 && cols >= 1, "bcast_col", "expected [R,1]");
  return emit1(v, Op::kBcastCol, OpAttrs{0.0, cols}, {v.value().dim(0), cols});
}

Var bcast_all(Var s, std::vector<long> shape) {
  require(s.value().size() == 1, "bcast_all", "expected scalar");
  return emit1(s, Op::kBcastAll, {}, std::move(shape));
}

Var group_row_sum(Var a, long group_len) {
  require_2d(a, "group_row_sum");
  require(group_len >= 1 && a.value().dim(0) % group_len == 0, "group_row_sum",
          "rows not divisible by group length");
  return emit1(a, Op::kGroupRowSum, OpAttrs{0.0, group_len},
               {a.value().dim(0) / group_len, a.value().dim(1)});
}

Var repeat_rows(Var a, long rep) {
  require_2d(a, "repeat_rows");
  require(rep >= 1, "repeat_rows", "bad repeat count");
  return emit1(a, Op::kRepeatRows, OpAttrs{0.0, rep}, {a.value().dim(0) * rep, a.value().dim(1)});
}

Var permute021(Var a) {
  require(a.value().rank() == 3, "permute021", "expected rank-3");
  return emit1(a, Op::kPermute021, {},
               {a.value().dim(0), a.value().dim(2), a.value().dim(1)});
}

// ------------------------------------------------------------- composites

Var square(Var a) { return mul(a, a); }

Var mean_all(Var a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

Var neg(Var a) { return mul_scalar(a, -1.0); }

Var softmax_rows(Var logits) {
  require_2d(logits, "softmax");
  const Tensor& lv = logits.value();
  const long r = lv.dim(0), c = lv.dim(1);
  // Rowwise max as a constant shift: the softmax value and all its
  // derivatives are invariant to it, so treating it as data is exact.
  Tensor mx = Tensor::zeros({r, 1});
  for (long i = 0; i < r; ++i) {
    double m = lv[i * c];
    for (long j = 1; j < c; ++j) m = std::max(m, lv[i * c + j]);
    mx.mutable_data()[i] = m;
  }
  Var shift = logits.trace->leaf(std::move(mx));
  Var e = vexp(sub(logits, bcast_col(shift, c)));
  return divide(e, bcast_col(row_sum(e), c));
}

Var conv1d(Var x, Var w, long padding) {
  require(x.value().rank() == 3, "conv1d", "input must be [B,Cin,L]");
  require(w.value().rank() == 3, "conv1d", "weight must be [Cout,Cin,K]");
  require(x.value().dim(1) == w.value().dim(1), "conv1d",
          "channel mismatch: " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  const long B = x.value().dim(0), L = x.value().dim(2);
  const long cout = w.value().dim(0), cin = w.value().dim(1), K = w.value().dim(2);
  const long lout = L + 2 * padding - K + 1;
  require(lout >= 1, "conv1d", "kernel wider than padded input");
  Var cols = im2col(x, K, padding);                          // [B*Lout, Cin*K]
  Var wm = transpose(reshape(w, {cout, cin * K}));           // [Cin*K, Cout]
  Var y = matmul(cols, wm);                                  // [B*Lout, Cout]
  return permute021(reshape(y, {B, lout, cout}));            // [B, Cout, Lout]
}

Var batchnorm_train(Var x, Var gamma, Var beta, double eps, Tensor* batch_mean,
                    Tensor* batch_var) {
  require_2d(x, "batchnorm");
  const long r = x.value().dim(0), c = x.value().dim(1);
  require(gamma.value().rank() == 2 && gamma.value().dim(0) == 1 && gamma.value().dim(1) == c,
          "batchnorm", "gamma must be [1,C]");
  require(beta.value().same_shape(gamma.value()), "batchnorm", "beta must match gamma");
  require(r >= 2, "batchnorm", "need at least 2 rows for batch statistics");
  Var mu = mul_scalar(col_sum(x), 1.0 / static_cast<double>(r));        // [1,C]
  Var xc = sub(x, bcast_row(mu, r));
  Var var = mul_scalar(col_sum(mul(xc, xc)), 1.0 / static_cast<double>(r));
  Var sd = vsqrt(add_scalar(var, eps));
  Var xn = divide(xc, bcast_row(sd, r));
  if (batch_mean) *batch_mean = mu.value();
  if (batch_var) *batch_var = var.value();
  return add(mul(xn, bcast_row(gamma, r)), bcast_row(beta, r));
}

Var batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                   const Tensor& running_var, double eps) {
  require_2d(x, "batchnorm");
  const long r = x.value().dim(0), c = x.value().dim(1);
  require(running_mean.size() == c && running_var.size() == c, "batchnorm",
          "running statistics must have one entry per column");
  Trace& t = *x.trace;
  Tensor denom = Tensor::zeros({1, c});
  for (long j = 0; j < c; ++j)
    denom.mutable_data()[j] = std::sqrt(running_var[j] + eps);
  Tensor mu = Tensor::zeros({1, c});
  for (long j = 0; j < c; ++j) mu.mutable_data()[j] = running_mean[j];
  Var xn = divide(sub(x, bcast_row(t.leaf(std::move(mu)), r)),
                  bcast_row(t.leaf(std::move(denom)), r));
  return add(mul(xn, bcast_row(gamma, r)), bcast_row(beta, r));
}

Var batchnorm1d_train(Var x, Var gamma, Var beta, double eps, Tensor* batch_mean,
                      Tensor* batch_var) {
  require(x.value().rank() == 3, "batchnorm1d", "expected [B,C,L]");
  const long B = x.value().dim(0), C = x.value().dim(1), L = x.value().dim(2);
  // Rows become (batch, time) pairs so statistics pool over batch and time.
  Var flat = reshape(permute021(x), {B * L, C});
  Var y = batchnorm_train(flat, gamma, beta, eps, batch_mean, batch_var);
  return permute021(reshape(y, {B, L, C}));
}

// --------------------------------------------------------------- backward

Tensor GradientMap::get(Var leaf) const {
  auto it = grads_.find(leaf.id);
  if (it == grads_.end()) return Tensor::zeros(leaf.shape());
  return it->second.value();
}

Var GradientMap::get_var(Var leaf) const {
  auto it = grads_.find(leaf.id);
  if (it == grads_.end()) return leaf.trace->leaf(Tensor::zeros(leaf.shape()));
  return it->second;
}

GradientMap backward(Var out, const std::vector<Var>& leaves, bool detached) {
  if (!out.valid()) throw std::invalid_argument("backward: invalid output var");
  if (out.value().size() != 1)
    throw std::invalid_argument("backward: output must be scalar, got " +
                                shape_str(out.shape()));
  Trace& t = *out.trace;
  for (Var l : leaves)
    if (l.trace != &t) throw std::invalid_argument("backward: leaf from different trace");

  std::unordered_map<int, Var> adj;
  adj[out.id] = t.leaf(Tensor::scalar(1.0));

  auto accum = [&](int id, Var g) {
    if (id < 0) return;
    auto it = adj.find(id);
    if (it == adj.end())
      adj.emplace(id, g);
    else
      it->second = add(it->second, g);
  };

  for (int id = out.id; id >= 0; --id) {
    auto it = adj.find(id);
    if (it == adj.end()) continue;
    Var g = it->second;
    const TraceNode& n = t.node(id);
    Var A{&t, n.in[0]}, B{&t, n.in[1]}, Y{&t, id};
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
        accum(n.in[0], g);
        accum(n.in[1], g);
        break;
      case Op::kSub:
        accum(n.in[0], g);
        accum(n.in[1], neg(g));
        break;
      case Op::kMul:
        accum(n.in[0], mul(g, B));
        accum(n.in[1], mul(g, A));
        break;
      case Op::kDiv:
        accum(n.in[0], divide(g, B));
        accum(n.in[1], neg(divide(mul(g, Y), B)));
        break;
      case Op::kDivNz:
        accum(n.in[0], div_nz(g, B));
        accum(n.in[1], neg(div_nz(mul(g, Y), B)));
        break;
      case Op::kAddScalar:
        accum(n.in[0], g);
        break;
      case Op::kMulScalar:
        accum(n.in[0], mul_scalar(g, n.attrs.s));
        break;
      case Op::kExp:
        accum(n.in[0], mul(g, Y));
        break;
      case Op::kLog:
        accum(n.in[0], divide(g, A));
        break;
      case Op::kSqrt:
        // d sqrt(x)/dx = 1/(2 sqrt(x)); defined as 0 where the radicand is 0.
        accum(n.in[0], div_nz(mul_scalar(g, 0.5), Y));
        break;
      case Op::kRelu: {
        const Tensor& av = A.value();
        Tensor mask = Tensor::zeros(av.shape());
        for (long i = 0; i < av.size(); ++i)
          mask.mutable_data()[i] = av[i] > 0.0 ? 1.0 : 0.0;
        accum(n.in[0], mul(g, t.leaf(std::move(mask))));
        break;
      }
      case Op::kMatMul:
        accum(n.in[0], matmul(g, transpose(B)));
        accum(n.in[1], matmul(transpose(A), g));
        break;
      case Op::kTranspose:
        accum(n.in[0], transpose(g));
        break;
      case Op::kReshape:
        accum(n.in[0], reshape(g, A.shape()));
        break;
      case Op::kIm2col:
        accum(n.in[0], col2im(g, n.attrs.i0, n.attrs.i1, A.value().dim(2)));
        break;
      case Op::kCol2im:
        accum(n.in[0], im2col(g, n.attrs.i0, n.attrs.i1));
        break;
      case Op::kConcatCols: {
        const long ca = A.value().dim(1);
        accum(n.in[0], slice_cols(g, 0, ca));
        accum(n.in[1], slice_cols(g, ca, ca + B.value().dim(1)));
        break;
      }
      case Op::kSliceCols:
        accum(n.in[0], pad_cols(g, n.attrs.i0, A.value().dim(1) - n.attrs.i1));
        break;
      case Op::kPadCols:
        accum(n.in[0], slice_cols(g, n.attrs.i0, n.attrs.i0 + A.value().dim(1)));
        break;
      case Op::kRowSum:
        accum(n.in[0], bcast_col(g, A.value().dim(1)));
        break;
      case Op::kColSum:
        accum(n.in[0], bcast_row(g, A.value().dim(0)));
        break;
      case Op::kSumAll:
        accum(n.in[0], bcast_all(g, A.shape()));
        break;
      case Op::kBcastRow:
        accum(n.in[0], col_sum(g));
        break;
      case Op::kBcastCol:
        accum(n.in[0], row_sum(g));
        break;
      case Op::kBcastAll:
        accum(n.in[0], sum_all(g));
        break;
      case Op::kGroupRowSum:
        accum(n.in[0], repeat_rows(g, n.attrs.i0));
        break;
      case Op::kRepeatRows:
        accum(n.in[0], group_row_sum(g, n.attrs.i0));
        break;
      case Op::kPermute021:
        accum(n.in[0], permute021(g));
        break;
    }
  }

  GradientMap gm;
  for (Var l : leaves) {
    auto it = adj.find(l.id);
    if (it == adj.end()) continue;
    Var g = it->second;
    if (detached) g = t.leaf(g.value());  // cut the second-order path
    gm.set(l.id, g);
  }
  return gm;
}

}  // namespace mgait
