#pragma once
// Reverse-mode autodiff over dense row-major tensors, tape style: ops append
// nodes, backward() runs the tape in reverse and accumulates into bound
// parameter blocks, then clears the tape. One tape instance is rebuilt per
// minibatch. Instantiated with float for training and double for gradient
// checks. Matmul inner loops are Eigen; everything is single threaded and
// accumulation order is fixed, so fixed seeds give bit-identical runs.
#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace acsac {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); i++) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

// Trainable parameter block. Lives outside the tape; grad is accumulated by
// backward() and consumed/zeroed by the optimizer.
template <typename S>
struct Param {
  std::string name;
  Shape shape;
  std::vector<S> value, grad;

  Param() = default;
  Param(std::string n, Shape sh) : name(std::move(n)), shape(std::move(sh)) {
    value.assign(size_t(numel(shape)), S(0));
    grad.assign(size_t(numel(shape)), S(0));
  }
  int64_t size() const { return int64_t(value.size()); }
};

template <typename S>
class Tape {
  using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<EMat>;
  using CMap = Eigen::Map<const EMat>;

 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  ~Tape() { clear(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  size_t num_nodes() const { return nodes_.size(); }

  // ---- leaves ----

  // Uninitialized input; caller fills via data(). No gradient flows into it.
  int input(const Shape& shape) {
    Node nd;
    nd.shape = shape;
    nd.val = take(size_t(numel(shape)));
    nodes_.push_back(std::move(nd));
    return int(nodes_.size()) - 1;
  }

  int input(const Shape& shape, const S* src) {
    // numel before the push: `shape` may alias a node's shape inside nodes_,
    // and push_back invalidates that reference.
    const size_t n = size_t(numel(shape));
    int id = input(shape);
    std::memcpy(nodes_[id].val.data(), src, sizeof(S) * n);
    return id;
  }

  int input(const Shape& shape, const std::vector<S>& src) {
    if (int64_t(src.size()) != numel(shape))
      fail("input", "data size mismatch for " + shape_str(shape));
    return input(shape, src.data());
  }

  // Parameter leaf: value copied in, gradient accumulated back into p.grad.
  int param(Param<S>& p) {
    int id = input(p.shape, p.value.data());
    if (grad_enabled_) {
      nodes_[id].needs = true;
      nodes_[id].bound = &p;
    }
    return id;
  }

  // Parameter used without gradient tracking (frozen / stop-gradient).
  int leaf(Param<S>& p, bool frozen) { return frozen ? input(p.shape, p.value.data()) : param(p); }

  S* data(int id) { return node(id).val.data(); }
  const S* val(int id) const { return node(id).val.data(); }
  const Shape& shape(int id) const { return node(id).shape; }
  std::vector<S> values(int id) const { return node(id).val; }

  // ---- ops ----

  // 2D [m,k]x[k,n] or batched 3D [B,m,k]x[B,k,n]; trans_a / trans_b apply to
  // the trailing two axes.
  int matmul(int a, int b, bool trans_a = false, bool trans_b = false) {
    const Shape& sa = shape(a);
    const Shape& sb = shape(b);
    if (sa.size() != sb.size() || (sa.size() != 2 && sa.size() != 3))
      fail("matmul", shape_str(sa) + " x " + shape_str(sb));
    int batch = 1;
    if (sa.size() == 3) {
      if (sa[0] != sb[0]) fail("matmul", "batch mismatch " + shape_str(sa) + " x " + shape_str(sb));
      batch = sa[0];
    }
    int ar = sa[sa.size() - 2], ac = sa[sa.size() - 1];
    int br = sb[sb.size() - 2], bc = sb[sb.size() - 1];
    int m = trans_a ? ac : ar, k = trans_a ? ar : ac;
    int kb = trans_b ? bc : br, n = trans_b ? br : bc;
    if (k != kb) fail("matmul", "inner dim " + shape_str(sa) + " x " + shape_str(sb));
    Shape so = sa.size() == 3 ? Shape{batch, m, n} : Shape{m, n};
    int out = fresh(so, {a, b});
    for (int i = 0; i < batch; i++) {
      CMap A(val(a) + int64_t(i) * ar * ac, ar, ac);
      CMap B(val(b) + int64_t(i) * br * bc, br, bc);
      Map C(data(out) + int64_t(i) * m * n, m, n);
      if (!trans_a && !trans_b) C.noalias() = A * B;
      else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
      else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
      else C.noalias() = A.transpose() * B.transpose();
    }
    attach(out, [this, a, b, out, trans_a, trans_b, batch, ar, ac, br, bc, m, n] {
      for (int i = 0; i < batch; i++) {
        CMap A(val(a) + int64_t(i) * ar * ac, ar, ac);
        CMap B(val(b) + int64_t(i) * br * bc, br, bc);
        CMap G(grad_ro(out) + int64_t(i) * m * n, m, n);
        if (needs(a)) {
          Map GA(gptr(a) + int64_t(i) * ar * ac, ar, ac);
          if (!trans_a) GA.noalias() += trans_b ? (G * B).eval() : (G * B.transpose()).eval();
          else GA.noalias() += trans_b ? (B.transpose() * G.transpose()).eval() : (B * G.transpose()).eval();
        }
        if (needs(b)) {
          Map GB(gptr(b) + int64_t(i) * br * bc, br, bc);
          if (!trans_b) GB.noalias() += trans_a ? (A * G).eval() : (A.transpose() * G).eval();
          else GB.noalias() += trans_a ? (G.transpose() * A.transpose()).eval() : (G.transpose() * A).eval();
        }
      }
    });
    return out;
  }

  // Elementwise add; b may broadcast if its shape is a trailing suffix of a's
  // (bias add, positional embeddings).
  int add(int a, int b) {
    const Shape& sa = shape(a);
    const Shape& sb = shape(b);
    if (!is_suffix(sb, sa)) fail("add", shape_str(sa) + " + " + shape_str(sb));
    int64_t nb = numel(sb), na = numel(sa), lead = na / nb;
    int out = fresh(sa, {a, b});
    const S* pa = val(a);
    const S* pb = val(b);
    S* po = data(out);
    for (int64_t i = 0; i < lead; i++)
      for (int64_t j = 0; j < nb; j++) po[i * nb + j] = pa[i * nb + j] + pb[j];
    attach(out, [this, a, b, out, lead, nb] {
      const S* g = grad_ro(out);
      if (needs(a)) {
        S* ga = gptr(a);
        for (int64_t i = 0; i < lead * nb; i++) ga[i] += g[i];
      }
      if (needs(b)) {
        S* gb = gptr(b);
        for (int64_t i = 0; i < lead; i++)
          for (int64_t j = 0; j < nb; j++) gb[j] += g[i * nb + j];
      }
    });
    return out;
  }

  // Elementwise multiply; same shape, or b scalar (numel 1).
  int mul(int a, int b) {
    const Shape& sa = shape(a);
    const Shape& sb = shape(b);
    bool scalar_b = numel(sb) == 1;
    if (!scalar_b && sa != sb) fail("mul", shape_str(sa) + " * " + shape_str(sb));
    int64_t n = numel(sa);
    int out = fresh(sa, {a, b});
    const S* pa = val(a);
    const S* pb = val(b);
    S* po = data(out);
    if (scalar_b)
      for (int64_t i = 0; i < n; i++) po[i] = pa[i] * pb[0];
    else
      for (int64_t i = 0; i < n; i++) po[i] = pa[i] * pb[i];
    attach(out, [this, a, b, out, n, scalar_b] {
      const S* g = grad_ro(out);
      const S* pa = val(a);
      const S* pb = val(b);
      if (needs(a)) {
        S* ga = gptr(a);
        if (scalar_b)
          for (int64_t i = 0; i < n; i++) ga[i] += g[i] * pb[0];
        else
          for (int64_t i = 0; i < n; i++) ga[i] += g[i] * pb[i];
      }
      if (needs(b)) {
        S* gb = gptr(b);
        if (scalar_b) {
          S acc = 0;
          for (int64_t i = 0; i < n; i++) acc += g[i] * pa[i];
          gb[0] += acc;
        } else {
          for (int64_t i = 0; i < n; i++) gb[i] += g[i] * pa[i];
        }
      }
    });
    return out;
  }

  // Multiply by a compile-time constant (no gradient for c).
  int scale(int a, double c) {
    int64_t n = numel(shape(a));
    int out = fresh(shape(a), {a});
    const S* pa = val(a);
    S* po = data(out);
    const S sc = S(c);
    for (int64_t i = 0; i < n; i++) po[i] = pa[i] * sc;
    attach(out, [this, a, out, n, sc] {
      if (!needs(a)) return;
      const S* g = grad_ro(out);
      S* ga = gptr(a);
      for (int64_t i = 0; i < n; i++) ga[i] += g[i] * sc;
    });
    return out;
  }

  int relu(int a) {
    int64_t n = numel(shape(a));
    int out = fresh(shape(a), {a});
    const S* pa = val(a);
    S* po = data(out);
    for (int64_t i = 0; i < n; i++) po[i] = pa[i] > S(0) ? pa[i] : S(0);
    attach(out, [this, a, out, n] {
      if (!needs(a)) return;
      const S* g = grad_ro(out);
      const S* pa = val(a);
      S* ga = gptr(a);
      for (int64_t i = 0; i < n; i++)
        if (pa[i] > S(0)) ga[i] += g[i];
    });
    return out;
  }

  // Exact gelu: x * Phi(x).
  int gelu(int a) {
    int64_t n = numel(shape(a));
    int out = fresh(shape(a), {a});
    const S* pa = val(a);
    S* po = data(out);
    for (int64_t i = 0; i < n; i++) {
      double x = double(pa[i]);
      po[i] = S(x * 0.5 * (1.0 + std::erf(x * M_SQRT1_2)));
    }
    attach(out, [this, a, out, n] {
      if (!needs(a)) return;
      const S* g = grad_ro(out);
      const S* pa = val(a);
      S* ga = gptr(a);
      const double inv_sqrt_2pi = 0.3989422804014326779;
      for (int64_t i = 0; i < n; i++) {
        double x = double(pa[i]);
        double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        ga[i] += g[i] * S(cdf + x * pdf);
      }
    });
    return out;
  }

  int tanh_(int a) {
    int64_t n = numel(shape(a));
    int out = fresh(shape(a), {a});
    const S* pa = val(a);
    S* po = data(out);
    for (int64_t i = 0; i < n; i++) po[i] = S(std::tanh(double(pa[i])));
    attach(out, [this, a, out, n] {
      if (!needs(a)) return;
      const S* g = grad_ro(out);
      const S* y = val(out);
      S* ga = gptr(a);
      for (int64_t i = 0; i < n; i++) ga[i] += g[i] * (S(1) - y[i] * y[i]);
    });
    return out;
  }

  // Layer norm over the last axis with learnable scale/shift (shape [C]).
  int layer_norm(int x, int gain, int bias, double eps = 1e-5) {
    const Shape& sx = shape(x);
    int C = sx.back();
    if (shape(gain) != Shape{C} || shape(bias) != Shape{C})
      fail("layer_norm", "gain/bias must be [" + std::to_string(C) + "]");
    int64_t rows = numel(sx) / C;
    int out = fresh(sx, {x, gain, bias});
    std::vector<S> xhat = take(size_t(rows) * C);
    std::vector<S> inv_std = take(size_t(rows));
    const S* px = val(x);
    const S* pg = val(gain);
    const S* pb = val(bias);
    S* po = data(out);
    for (int64_t r = 0; r < rows; r++) {
      const S* xr = px + r * C;
      double mu = 0;
      for (int j = 0; j < C; j++) mu += double(xr[j]);
      mu /= C;
      double var = 0;
      for (int j = 0; j < C; j++) {
        double d = double(xr[j]) - mu;
        var += d * d;
      }
      var /= C;
      double istd = 1.0 / std::sqrt(var + eps);
      inv_std[r] = S(istd);
      for (int j = 0; j < C; j++) {
        S xh = S((double(xr[j]) - mu) * istd);
        xhat[r * C + j] = xh;
        po[r * C + j] = xh * pg[j] + pb[j];
      }
    }
    attach(out, [this, x, gain, bias, out, rows, C, xh = std::move(xhat), ist = std::move(inv_std)] {
      const S* g = grad_ro(out);
      const S* pg = val(gain);
      S* ggain = needs(gain) ? gptr(gain) : nullptr;
      S* gbias = needs(bias) ? gptr(bias) : nullptr;
      S* gx = needs(x) ? gptr(x) : nullptr;
      for (int64_t r = 0; r < rows; r++) {
        const S* gr = g + r * C;
        const S* xhr = xh.data() + r * C;
        if (ggain)
          for (int j = 0; j < C; j++) ggain[j] += gr[j] * xhr[j];
        if (gbias)
          for (int j = 0; j < C; j++) gbias[j] += gr[j];
        if (gx) {
          // dxhat = g * gain; dx = istd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
          double s1 = 0, s2 = 0;
          for (int j = 0; j < C; j++) {
            double dxh = double(gr[j]) * double(pg[j]);
            s1 += dxh;
            s2 += dxh * double(xhr[j]);
          }
          s1 /= C;
          s2 /= C;
          double istd = double(ist[r]);
          S* gxr = gx + r * C;
          for (int j = 0; j < C; j++) {
            double dxh = double(gr[j]) * double(pg[j]);
            gxr[j] += S(istd * (dxh - s1 - double(xhr[j]) * s2));
          }
        }
      }
    });
    return out;
  }

  // Softmax over the last axis. mask shape must be a trailing suffix of x's
  // shape ending in the same last axis; entries with mask 0 get weight
  // exactly 0.0 and receive no gradient. Every row must keep at least one
  // unmasked entry.
  int masked_softmax(int x, const std::vector<uint8_t>& mask, const Shape& mask_shape) {
    const Shape& sx = shape(x);
    if (!is_suffix(mask_shape, sx) || int64_t(mask.size()) != numel(mask_shape))
      fail("masked_softmax", shape_str(sx) + " mask " + shape_str(mask_shape));
    int L = sx.back();
    if (mask_shape.back() != L) fail("masked_softmax", "mask last axis mismatch");
    int64_t rows = numel(sx) / L;
    int64_t mrows = numel(mask_shape) / L;
    int out = fresh(sx, {x});
    const S* px = val(x);
    S* po = data(out);
    for (int64_t r = 0; r < rows; r++) {
      const uint8_t* mr = mask.data() + (r % mrows) * L;
      const S* xr = px + r * L;
      S* yr = po + r * L;
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < L; j++)
        if (mr[j] && double(xr[j]) > mx) mx = double(xr[j]);
      if (!std::isfinite(mx)) fail("masked_softmax", "fully masked row");
      double z = 0;
      for (int j = 0; j < L; j++) {
        if (mr[j]) {
          double e = std::exp(double(xr[j]) - mx);
          yr[j] = S(e);
          z += e;
        } else {
          yr[j] = S(0);
        }
      }
      for (int j = 0; j < L; j++)
        if (mr[j]) yr[j] = S(double(yr[j]) / z);
    }
    attach(out, [this, x, out, rows, L, mrows, m = mask] {
      if (!needs(x)) return;
      const S* g = grad_ro(out);
      const S* y = val(out);
      S* gx = gptr(x);
      for (int64_t r = 0; r < rows; r++) {
        const uint8_t* mr = m.data() + (r % mrows) * L;
        const S* gr = g + r * L;
        const S* yr = y + r * L;
        double dot = 0;
        for (int j = 0; j < L; j++)
          if (mr[j]) dot += double(gr[j]) * double(yr[j]);
        S* gxr = gx + r * L;
        for (int j = 0; j < L; j++)
          if (mr[j]) gxr[j] += S(double(yr[j]) * (double(gr[j]) - dot));
      }
    });
    return out;
  }

  int sum(int a) { return reduce(a, false); }
  int mean(int a) { return reduce(a, true); }

  int slice(int a, int axis, int start, int len) {
    const Shape& sa = shape(a);
    if (axis < 0 || axis >= int(sa.size()) || start < 0 || len <= 0 || start + len > sa[axis])
      fail("slice", shape_str(sa) + " axis " + std::to_string(axis) + " [" + std::to_string(start) +
                    "," + std::to_string(start + len) + ")");
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; i++) outer *= sa[i];
    for (size_t i = axis + 1; i < sa.size(); i++) inner *= sa[i];
    int mid = sa[axis];
    Shape so = sa;
    so[axis] = len;
    int out = fresh(so, {a});
    const S* pa = val(a);
    S* po = data(out);
    for (int64_t o = 0; o < outer; o++)
      std::memcpy(po + o * len * inner, pa + (o * mid + start) * inner, sizeof(S) * size_t(len) * inner);
    attach(out, [this, a, out, outer, inner, mid, start, len] {
      if (!needs(a)) return;
      const S* g = grad_ro(out);
      S* ga = gptr(a);
      for (int64_t o = 0; o < outer; o++) {
        const S* gs = g + o * len * inner;
        S* gd = ga + (o * mid + start) * inner;
        for (int64_t i = 0; i < int64_t(len) * inner; i++) gd[i] += gs[i];
      }
    });
    return out;
  }

  int concat(const std::vector<int>& xs, int axis) {
    if (xs.empty()) fail("concat", "no inputs");
    Shape so = shape(xs[0]);
    if (axis < 0 || axis >= int(so.size())) fail("concat", "bad axis");
    int total = 0;
    for (int x : xs) {
      const Shape& s = shape(x);
      if (s.size() != so.size()) fail("concat", "rank mismatch");
      for (size_t i = 0; i < s.size(); i++)
        if (int(i) != axis && s[i] != so[i]) fail("concat", shape_str(s) + " vs " + shape_str(so));
      total += s[axis];
    }
    so[axis] = total;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; i++) outer *= so[i];
    for (size_t i = axis + 1; i < so.size(); i++) inner *= so[i];
    int out = fresh(so, xs);
    S* po = data(out);
    int64_t off = 0;
    std::vector<int> mids;
    for (int x : xs) {
      int mid = shape(x)[axis];
      mids.push_back(mid);
      const S* px = val(x);
      for (int64_t o = 0; o < outer; o++)
        std::memcpy(po + (o * total + off) * inner, px + o * mid * inner, sizeof(S) * size_t(mid) * inner);
      off += mid;
    }
    attach(out, [this, xs, out, outer, inner, total, mids] {
      const S* g = grad_ro(out);
      int64_t off = 0;
      for (size_t k = 0; k < xs.size(); k++) {
        int mid = mids[k];
        if (needs(xs[k])) {
          S* gx = gptr(xs[k]);
          for (int64_t o = 0; o < outer; o++) {
            const S* gs = g + (o * total + off) * inner;
            S* gd = gx + o * mid * inner;
            for (int64_t i = 0; i < int64_t(mid) * inner; i++) gd[i] += gs[i];
          }
        }
        off += mid;
      }
    });
    return out;
  }

  int reshape(int a, const Shape& s) {
    if (numel(s) != numel(shape(a))) fail("reshape", shape_str(shape(a)) + " -> " + shape_str(s));
    int64_t n = numel(s);
    int out = fresh(s, {a});
    std::memcpy(data(out), val(a), sizeof(S) * size_t(n));
    attach(out, [this, a, out, n] {
      if (!needs(a)) return;
      const S* g = grad_ro(out);
      S* ga = gptr(a);
      for (int64_t i = 0; i < n; i++) ga[i] += g[i];
    });
    return out;
  }

  // Scalar sum of squared differences.
  int squared_error_sum(int a, int b) {
    if (shape(a) != shape(b)) fail("squared_error_sum", shape_str(shape(a)) + " vs " + shape_str(shape(b)));
    int64_t n = numel(shape(a));
    int out = fresh({1}, {a, b});
    const S* pa = val(a);
    const S* pb = val(b);
    double acc = 0;
    for (int64_t i = 0; i < n; i++) {
      double d = double(pa[i]) - double(pb[i]);
      acc += d * d;
    }
    data(out)[0] = S(acc);
    attach(out, [this, a, b, out, n] {
      const S g = grad_ro(out)[0];
      const S* pa = val(a);
      const S* pb = val(b);
      if (needs(a)) {
        S* ga = gptr(a);
        for (int64_t i = 0; i < n; i++) ga[i] += S(2) * (pa[i] - pb[i]) * g;
      }
      if (needs(b)) {
        S* gb = gptr(b);
        for (int64_t i = 0; i < n; i++) gb[i] -= S(2) * (pa[i] - pb[i]) * g;
      }
    });
    return out;
  }

  // ---- backward ----

  // Seeds d(loss)=1, sweeps the tape in reverse, accumulates into bound
  // Param::grad, then clears the tape. A second backward without re-running
  // the forward pass is an error.
  void backward(int loss) {
    if (!grad_enabled_) fail("backward", "tape built with gradients disabled");
    if (nodes_.empty()) fail("backward", "empty tape (already cleared by a previous backward?)");
    if (numel(shape(loss)) != 1) fail("backward", "loss must be scalar, got " + shape_str(shape(loss)));
    gptr(loss)[0] = S(1);
    for (int i = loss; i >= 0; i--) {
      Node& nd = nodes_[i];
      if (nd.grad.empty() || !nd.back) continue;
      nd.back();
    }
    for (Node& nd : nodes_) {
      if (nd.bound && !nd.grad.empty()) {
        S* g = nd.bound->grad.data();
        for (size_t i = 0; i < nd.grad.size(); i++) g[i] += nd.grad[i];
      }
    }
    clear();
  }

  void clear() {
    for (Node& nd : nodes_) {
      give(std::move(nd.val));
      if (!nd.grad.empty()) give(std::move(nd.grad));
    }
    nodes_.clear();
  }

 private:
  struct Node {
    Shape shape;
    std::vector<S> val, grad;
    bool needs = false;           // gradient flows into this node
    Param<S>* bound = nullptr;    // parameter leaf
    std::function<void()> back;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  // Buffer pool shared by every tape on the thread: short-lived tapes (one
  // per step / per extraction) would otherwise bounce large allocations off
  // the OS. Entries are recycled on clear() and destruction.
  static std::map<size_t, std::vector<std::vector<S>>>& pool() {
    static thread_local std::map<size_t, std::vector<std::vector<S>>> p;
    return p;
  }

  [[noreturn]] static void fail(const char* op, const std::string& what) {
    throw std::runtime_error(std::string("ndgrad ") + op + ": " + what);
  }

  Node& node(int id) {
    if (id < 0 || id >= int(nodes_.size())) fail("node", "bad tensor id " + std::to_string(id));
    return nodes_[id];
  }
  const Node& node(int id) const {
    if (id < 0 || id >= int(nodes_.size())) fail("node", "bad tensor id " + std::to_string(id));
    return nodes_[id];
  }

  static bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    for (size_t i = 0; i < small.size(); i++)
      if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
    return true;
  }

  std::vector<S> take(size_t n) {
    auto it = pool().find(n);
    if (it != pool().end() && !it->second.empty()) {
      std::vector<S> v = std::move(it->second.back());
      it->second.pop_back();
      return v;
    }
    return std::vector<S>(n);
  }
  void give(std::vector<S>&& v) {
    if (!v.empty()) pool()[v.size()].push_back(std::move(v));
  }

  int fresh(const Shape& s, const std::vector<int>& inputs) {
    Node nd;
    nd.shape = s;
    nd.val = take(size_t(numel(s)));
    if (grad_enabled_)
      for (int i : inputs)
        if (node(i).needs) {
          nd.needs = true;
          break;
        }
    nodes_.push_back(std::move(nd));
    return int(nodes_.size()) - 1;
  }

  // Install the backprop closure only when it can matter.
  void attach(int out, std::function<void()> fn) {
    if (grad_enabled_ && nodes_[out].needs) nodes_[out].back = std::move(fn);
  }

  bool needs(int id) { return node(id).needs; }

  // Lazily allocated zeroed gradient buffer.
  S* gptr(int id) {
    Node& nd = node(id);
    if (nd.grad.empty()) {
      nd.grad = take(nd.val.size());
      std::fill(nd.grad.begin(), nd.grad.end(), S(0));
    }
    return nd.grad.data();
  }
  const S* grad_ro(int id) { return gptr(id); }

  int reduce(int a, bool mean_) {
    int64_t n = numel(shape(a));
    int out = fresh({1}, {a});
    const S* pa = val(a);
    double acc = 0;
    for (int64_t i = 0; i < n; i++) acc += double(pa[i]);
    data(out)[0] = S(mean_ ? acc / double(n) : acc);
    attach(out, [this, a, out, n, mean_] {
      if (!needs(a)) return;
      const S g = grad_ro(out)[0];
      const S w = mean_ ? S(double(g) / double(n)) : g;
      S* ga = gptr(a);
      for (int64_t i = 0; i < n; i++) ga[i] += w;
    });
    return out;
  }
};

}  // namespace acsac
