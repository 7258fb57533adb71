#pragma once
// Finite-difference oracle for the tape: builds random networks out of the
// full op set, evaluates analytic gradients, and compares every parameter
// coordinate against central differences. Shared by the unit tests and the
// acceptance suite.
#include "acsac/rng.hpp"
#include "acsac/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace gradcheck {

using acsac::Param;
using acsac::RngStream;
using acsac::Shape;
using acsac::Tape;

enum class OpKind {
  kMatmul,
  kAdd,
  kMul,
  kScale,
  kRelu,
  kGelu,
  kTanh,
  kLayerNorm,
  kSoftmax,
  kSlice,
  kConcat,
  kReshape,
};

// Tensor reference: params encoded as -(idx+1), op outputs as op index >= 0.
struct OpRec {
  OpKind kind;
  int a = 0, b = 0;
  bool trans_b = false;
  double c = 1.0;
  int axis = 0, start = 0, len = 0;
  Shape shape;                  // reshape target
  std::vector<uint8_t> mask;    // softmax
  Shape mask_shape;
};

enum class FinalKind { kSqErr, kSum, kMean };

struct NetDesc {
  std::vector<Shape> param_shapes;
  std::vector<std::vector<double>> param_init;
  std::vector<OpRec> ops;
  int final_ref = 0;
  FinalKind final_kind = FinalKind::kSum;
  std::vector<double> target;  // for kSqErr
};

struct EvalOut {
  double loss = 0;
  double min_relu_abs = 1e30;  // smallest |x| seen entering a relu
};

inline EvalOut eval_net(const NetDesc& d, std::vector<Param<double>>& params, bool backward) {
  Tape<double> t(backward);
  EvalOut out;
  std::vector<int> pslot, oslot;
  for (auto& p : params) pslot.push_back(backward ? t.param(p) : t.input(p.shape, p.value));
  auto id = [&](int ref) { return ref < 0 ? pslot[size_t(-ref - 1)] : oslot[size_t(ref)]; };
  for (const OpRec& op : d.ops) {
    int a = id(op.a);
    switch (op.kind) {
      case OpKind::kMatmul: oslot.push_back(t.matmul(a, id(op.b), false, op.trans_b)); break;
      case OpKind::kAdd: oslot.push_back(t.add(a, id(op.b))); break;
      case OpKind::kMul: oslot.push_back(t.mul(a, id(op.b))); break;
      case OpKind::kScale: oslot.push_back(t.scale(a, op.c)); break;
      case OpKind::kRelu: {
        const double* v = t.val(a);
        for (int64_t i = 0; i < acsac::numel(t.shape(a)); i++)
          out.min_relu_abs = std::min(out.min_relu_abs, std::abs(v[i]));
        oslot.push_back(t.relu(a));
        break;
      }
      case OpKind::kGelu: oslot.push_back(t.gelu(a)); break;
      case OpKind::kTanh: oslot.push_back(t.tanh_(a)); break;
      case OpKind::kLayerNorm:
        // op.b is the gain param; bias is the next param block
        oslot.push_back(t.layer_norm(a, id(op.b), id(op.b - 1)));
        break;
      case OpKind::kSoftmax: oslot.push_back(t.masked_softmax(a, op.mask, op.mask_shape)); break;
      case OpKind::kSlice: oslot.push_back(t.slice(a, op.axis, op.start, op.len)); break;
      case OpKind::kConcat: oslot.push_back(t.concat({a, id(op.b)}, op.axis)); break;
      case OpKind::kReshape: oslot.push_back(t.reshape(a, op.shape)); break;
    }
  }
  int last = id(d.final_ref);
  int loss;
  if (d.final_kind == FinalKind::kSqErr) {
    int tgt = t.input(t.shape(last), d.target);
    loss = t.squared_error_sum(last, tgt);
  } else if (d.final_kind == FinalKind::kSum) {
    loss = t.sum(last);
  } else {
    loss = t.mean(last);
  }
  out.loss = t.val(loss)[0];
  if (backward) t.backward(loss);
  return out;
}

inline std::vector<double> rand_vals(RngStream& rng, int64_t n, double scale = 1.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return v;
}

// Random network over the op set. Shapes stay tiny so FD stays fast.
inline NetDesc random_net(RngStream& rng) {
  NetDesc d;
  auto new_param = [&](Shape sh, double scale) {
    d.param_shapes.push_back(sh);
    d.param_init.push_back(rand_vals(rng, acsac::numel(sh), scale));
    return -int(d.param_shapes.size());  // encoded ref
  };
  std::vector<int> live;        // encoded refs
  std::vector<Shape> live_shape;
  {
    int r = 2 + rng.uniform_int(3), c = 2 + rng.uniform_int(3);
    live.push_back(new_param({r, c}, 1.0));
    live_shape.push_back({r, c});
  }
  auto push_op = [&](OpRec op, Shape sh) {
    d.ops.push_back(std::move(op));
    live.push_back(int(d.ops.size()) - 1);
    live_shape.push_back(std::move(sh));
  };
  int depth = 3 + rng.uniform_int(4);
  for (int it = 0; it < depth; it++) {
    int pick = rng.uniform_int(int(live.size()));
    int a = live[pick];
    Shape sa = live_shape[pick];
    OpRec op;
    op.a = a;
    switch (rng.uniform_int(10)) {
      case 0: {  // matmul with a fresh param, random trans_b
        if (sa.size() != 2) break;
        int n = 2 + rng.uniform_int(3);
        op.kind = OpKind::kMatmul;
        op.trans_b = rng.uniform_int(2) == 1;
        op.b = new_param(op.trans_b ? Shape{n, sa[1]} : Shape{sa[1], n},
                         1.0 / std::sqrt(double(sa[1])));
        push_op(op, {sa[0], n});
        break;
      }
      case 1: {  // bias add (broadcast over leading axes)
        op.kind = OpKind::kAdd;
        op.b = new_param({sa.back()}, 0.5);
        push_op(op, sa);
        break;
      }
      case 2: {  // elementwise mul with a fresh same-shape param
        op.kind = OpKind::kMul;
        op.b = new_param(sa, 0.7);
        push_op(op, sa);
        break;
      }
      case 3:
        op.kind = OpKind::kScale;
        op.c = rng.uniform(0.3, 1.7);
        push_op(op, sa);
        break;
      case 4:
        op.kind = OpKind::kRelu;
        push_op(op, sa);
        break;
      case 5:
        op.kind = rng.uniform_int(2) ? OpKind::kGelu : OpKind::kTanh;
        push_op(op, sa);
        break;
      case 6: {  // layer norm; bias param created right after gain
        int C = sa.back();
        op.kind = OpKind::kLayerNorm;
        op.b = new_param({C}, 1.0);
        new_param({C}, 0.3);
        push_op(op, sa);
        break;
      }
      case 7: {  // masked softmax over last axis
        op.kind = OpKind::kSoftmax;
        op.mask_shape = sa;
        op.mask.assign(size_t(acsac::numel(sa)), 1);
        int L = sa.back();
        int64_t rows = acsac::numel(sa) / L;
        for (int64_t r = 0; r < rows; r++) {
          for (int j = 0; j < L; j++) op.mask[r * L + j] = uint8_t(rng.uniform_int(2));
          op.mask[r * L + rng.uniform_int(L)] = 1;  // keep each row alive
        }
        push_op(op, sa);
        break;
      }
      case 8: {  // slice along a random axis
        int axis = rng.uniform_int(int(sa.size()));
        if (sa[axis] < 2) break;
        op.kind = OpKind::kSlice;
        op.axis = axis;
        op.len = 1 + rng.uniform_int(sa[axis] - 1);
        op.start = rng.uniform_int(sa[axis] - op.len + 1);
        Shape so = sa;
        so[axis] = op.len;
        push_op(op, so);
        break;
      }
      case 9: {  // concat with itself, then flatten
        int axis = rng.uniform_int(int(sa.size()));
        op.kind = OpKind::kConcat;
        op.b = a;
        op.axis = axis;
        Shape so = sa;
        so[axis] *= 2;
        push_op(op, so);
        OpRec rs;
        rs.kind = OpKind::kReshape;
        rs.a = live.back();
        rs.shape = {int(acsac::numel(so))};
        push_op(rs, rs.shape);
        break;
      }
    }
  }
  d.final_ref = live.back();
  int k = rng.uniform_int(3);
  d.final_kind = k == 0 ? FinalKind::kSqErr : (k == 1 ? FinalKind::kSum : FinalKind::kMean);
  if (d.final_kind == FinalKind::kSqErr)
    d.target = rand_vals(rng, acsac::numel(live_shape.back()), 1.0);
  return d;
}

struct Stats {
  int nets = 0;
  int64_t coords = 0;
  double max_rel = 0;
  int failures = 0;
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Checks `nets` random networks; every parameter coordinate must match the
// central finite difference within tol.
inline Stats run_gradcheck(int nets, uint64_t seed, double fd_step = 1e-5, double tol = 1e-4) {
  RngStream rng(seed);
  Stats st;
  for (int i = 0; i < nets; i++) {
    NetDesc d;
    std::vector<Param<double>> params;
    // regenerate until no relu input sits near its kink (FD would cross it)
    for (int attempt = 0; attempt < 64; attempt++) {
      d = random_net(rng);
      params.clear();
      for (size_t p = 0; p < d.param_shapes.size(); p++) {
        params.emplace_back("p" + std::to_string(p), d.param_shapes[p]);
        params.back().value.assign(d.param_init[p].begin(), d.param_init[p].end());
      }
      EvalOut probe = eval_net(d, params, false);
      if (probe.min_relu_abs > 1e-3) break;
    }
    eval_net(d, params, true);  // fills params[...].grad
    for (auto& p : params) {
      for (size_t j = 0; j < p.value.size(); j++) {
        double keep = p.value[j];
        p.value[j] = keep + fd_step;
        double lp = eval_net(d, params, false).loss;
        p.value[j] = keep - fd_step;
        double lm = eval_net(d, params, false).loss;
        p.value[j] = keep;
        double fd = (lp - lm) / (2 * fd_step);
        double re = rel_err(p.grad[j], fd);
        st.max_rel = std::max(st.max_rel, re);
        if (re > tol) st.failures++;
        st.coords++;
      }
      std::fill(p.grad.begin(), p.grad.end(), 0.0);
    }
    st.nets++;
  }
  return st;
}

}  // namespace gradcheck
