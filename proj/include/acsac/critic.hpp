#pragma once
// Causal transformer critic over the token sequence [state, a_1, ..., a_H].
// A single forward pass yields H prefix-conditioned Q-heads; the causal mask
// makes head h a function of (s, a_{1:h}) only, so query chunks may be
// zero-padded past the prefix of interest. The ensemble holds K fully
// independent members (no shared token projections).
//
// Also hosts the TD machinery shared by every training mode: target
// construction from reward rows + bootstrap values, and a squared-error loss
// over a caller-chosen subset of heads. Running the loss with heads {1..H}
// gives the multi-horizon objective; {h} alone gives the fixed-chunk
// baseline; an H=1 critic with heads {1} is exactly the single-step baseline.
#include "acsac/rng.hpp"
#include "acsac/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace acsac {

template <typename S>
struct CriticBlock {
  Param<S> ln1_g, ln1_b, w_qkv, b_qkv, w_proj, b_proj;
  Param<S> ln2_g, ln2_b, w_ff1, b_ff1, w_ff2, b_ff2;
};

template <typename S>
struct CriticMember {
  int obs_dim = 0, act_dim = 0, H = 0;
  int n_head = 0, d_head = 0, n_layer = 0, dm = 0;  // dm = n_head * d_head
  Param<S> w_state, b_state, w_act, b_act, pos;     // pos: [H+1, dm], additive
  std::vector<CriticBlock<S>> blocks;
  Param<S> lnf_g, lnf_b;
  Param<S> w_head, b_head;       // [H, dm], [H]: head h reads token h
  std::vector<uint8_t> causal;   // [T,T] mask, row i admits j <= i

  CriticMember() = default;
  CriticMember(const std::string& prefix, int obs, int act, int H_, int heads,
               int dhead, int layers, RngStream& rng)
      : obs_dim(obs), act_dim(act), H(H_), n_head(heads), d_head(dhead),
        n_layer(layers), dm(heads * dhead) {
    if (obs < 1 || act < 1 || H_ < 1 || heads < 1 || dhead < 1 || layers < 1)
      throw std::runtime_error("critic: all dimensions must be positive");
    const int T = H + 1;
    auto gauss = [&rng](Param<S>& p, double sd) {
      for (S& v : p.value) v = S(sd * rng.gaussian());
    };
    auto ones = [](Param<S>& p) {
      for (S& v : p.value) v = S(1);
    };
    w_state = Param<S>(prefix + ".w_state", {obs, dm});
    b_state = Param<S>(prefix + ".b_state", {dm});
    w_act = Param<S>(prefix + ".w_act", {act, dm});
    b_act = Param<S>(prefix + ".b_act", {dm});
    pos = Param<S>(prefix + ".pos", {T, dm});
    gauss(w_state, 0.02);
    gauss(w_act, 0.02);
    gauss(pos, 0.02);
    for (int l = 0; l < layers; l++) {
      std::string bp = prefix + ".block" + std::to_string(l);
      CriticBlock<S> blk;
      blk.ln1_g = Param<S>(bp + ".ln1_g", {dm});
      blk.ln1_b = Param<S>(bp + ".ln1_b", {dm});
      blk.w_qkv = Param<S>(bp + ".w_qkv", {dm, 3 * dm});
      blk.b_qkv = Param<S>(bp + ".b_qkv", {3 * dm});
      blk.w_proj = Param<S>(bp + ".w_proj", {dm, dm});
      blk.b_proj = Param<S>(bp + ".b_proj", {dm});
      blk.ln2_g = Param<S>(bp + ".ln2_g", {dm});
      blk.ln2_b = Param<S>(bp + ".ln2_b", {dm});
      blk.w_ff1 = Param<S>(bp + ".w_ff1", {dm, 4 * dm});
      blk.b_ff1 = Param<S>(bp + ".b_ff1", {4 * dm});
      blk.w_ff2 = Param<S>(bp + ".w_ff2", {4 * dm, dm});
      blk.b_ff2 = Param<S>(bp + ".b_ff2", {dm});
      ones(blk.ln1_g);
      ones(blk.ln2_g);
      gauss(blk.w_qkv, 0.02);
      gauss(blk.w_proj, 0.02);
      gauss(blk.w_ff1, 0.02);
      gauss(blk.w_ff2, 0.02);
      blocks.push_back(std::move(blk));
    }
    lnf_g = Param<S>(prefix + ".lnf_g", {dm});
    lnf_b = Param<S>(prefix + ".lnf_b", {dm});
    ones(lnf_g);
    w_head = Param<S>(prefix + ".w_head", {H, dm});
    b_head = Param<S>(prefix + ".b_head", {H});
    gauss(w_head, 0.01);
    causal.assign(size_t(T) * T, 0);
    for (int i = 0; i < T; i++)
      for (int j = 0; j <= i; j++) causal[size_t(i) * T + j] = 1;
  }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> ps{&w_state, &b_state, &w_act, &b_act, &pos};
    for (CriticBlock<S>& b : blocks) {
      ps.push_back(&b.ln1_g);
      ps.push_back(&b.ln1_b);
      ps.push_back(&b.w_qkv);
      ps.push_back(&b.b_qkv);
      ps.push_back(&b.w_proj);
      ps.push_back(&b.b_proj);
      ps.push_back(&b.ln2_g);
      ps.push_back(&b.ln2_b);
      ps.push_back(&b.w_ff1);
      ps.push_back(&b.b_ff1);
      ps.push_back(&b.w_ff2);
      ps.push_back(&b.b_ff2);
    }
    ps.push_back(&lnf_g);
    ps.push_back(&lnf_b);
    ps.push_back(&w_head);
    ps.push_back(&b_head);
    return ps;
  }

  // states: [B, obs], chunks: [B, H*act] (or any shape with that many
  // elements per row, e.g. [B, H, act]). Returns Q-heads [B, H].
  int forward(Tape<S>& t, int states, int chunks, bool frozen = false) {
    const Shape& ss = t.shape(states);
    if (ss.size() != 2 || ss[1] != obs_dim)
      throw std::runtime_error("critic forward: states must be [B, obs_dim]");
    const int B = ss[0];
    int64_t want = int64_t(B) * H * act_dim, got = 1;
    for (int d : t.shape(chunks)) got *= d;
    if (got != want)
      throw std::runtime_error("critic forward: chunk buffer size mismatch");
    const int T = H + 1;

    int st = t.add(t.matmul(states, t.leaf(w_state, frozen)), t.leaf(b_state, frozen));
    int at = t.add(t.matmul(t.reshape(chunks, {B * H, act_dim}), t.leaf(w_act, frozen)),
                   t.leaf(b_act, frozen));
    int x = t.concat({t.reshape(st, {B, 1, dm}), t.reshape(at, {B, H, dm})}, 1);
    x = t.add(x, t.leaf(pos, frozen));

    for (CriticBlock<S>& blk : blocks) {
      int xn = t.layer_norm(x, t.leaf(blk.ln1_g, frozen), t.leaf(blk.ln1_b, frozen));
      int qkv = t.reshape(
          t.add(t.matmul(t.reshape(xn, {B * T, dm}), t.leaf(blk.w_qkv, frozen)),
                t.leaf(blk.b_qkv, frozen)),
          {B, T, 3 * dm});
      int q = t.slice(qkv, 2, 0, dm);
      int k = t.slice(qkv, 2, dm, dm);
      int v = t.slice(qkv, 2, 2 * dm, dm);
      std::vector<int> heads_out;
      for (int hh = 0; hh < n_head; hh++) {
        int qi = t.slice(q, 2, hh * d_head, d_head);
        int ki = t.slice(k, 2, hh * d_head, d_head);
        int vi = t.slice(v, 2, hh * d_head, d_head);
        int sc = t.scale(t.matmul(qi, ki, false, true), 1.0 / std::sqrt(double(d_head)));
        heads_out.push_back(t.matmul(t.masked_softmax(sc, causal, {T, T}), vi));
      }
      int proj = t.add(
          t.matmul(t.reshape(t.concat(heads_out, 2), {B * T, dm}), t.leaf(blk.w_proj, frozen)),
          t.leaf(blk.b_proj, frozen));
      x = t.add(x, t.reshape(proj, {B, T, dm}));
      int xf = t.layer_norm(x, t.leaf(blk.ln2_g, frozen), t.leaf(blk.ln2_b, frozen));
      int ff = t.add(
          t.matmul(t.gelu(t.add(t.matmul(t.reshape(xf, {B * T, dm}), t.leaf(blk.w_ff1, frozen)),
                                t.leaf(blk.b_ff1, frozen))),
                   t.leaf(blk.w_ff2, frozen)),
          t.leaf(blk.b_ff2, frozen));
      x = t.add(x, t.reshape(ff, {B, T, dm}));
    }
    x = t.layer_norm(x, t.leaf(lnf_g, frozen), t.leaf(lnf_b, frozen));

    int wh = t.leaf(w_head, frozen);
    int bh = t.leaf(b_head, frozen);
    std::vector<int> cols;
    for (int h = 1; h <= H; h++) {
      int xh = t.reshape(t.slice(x, 1, h, 1), {B, dm});
      int qh = t.matmul(xh, t.slice(wh, 0, h - 1, 1), false, true);
      cols.push_back(t.add(qh, t.slice(bh, 0, h - 1, 1)));
    }
    return cols.size() == 1 ? cols[0] : t.concat(cols, 1);
  }
};

template <typename S>
struct CriticEnsemble {
  std::vector<CriticMember<S>> members;

  CriticEnsemble() = default;
  CriticEnsemble(int K, int obs, int act, int H, int heads, int dhead,
                 int layers, RngStream& rng, const std::string& prefix = "critic") {
    if (K < 1) throw std::runtime_error("critic: ensemble size must be positive");
    for (int k = 0; k < K; k++)
      members.emplace_back(prefix + std::to_string(k), obs, act, H, heads,
                           dhead, layers, rng);
  }

  int H() const { return members.empty() ? 0 : members[0].H; }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> ps;
    for (CriticMember<S>& m : members)
      for (Param<S>* p : m.params()) ps.push_back(p);
    return ps;
  }
};

// TD targets for one batch: G[b,h-1] = sum_{tau<h} gamma^tau r[b,tau]
//                                      + ok[b,h-1] * gamma^h * boot[b,h-1].
// rewards/ok come straight from chunked windows; boot holds the bootstrap
// value at s_{t+h} (consulted only where ok is set). Offsets h are 1-based.
template <typename S>
std::vector<S> build_targets(const std::vector<S>& rewards,
                             const std::vector<uint8_t>& ok,
                             const std::vector<double>& boot, int B, int H,
                             double gamma) {
  if (int(rewards.size()) != B * H || int(ok.size()) != B * H ||
      int(boot.size()) != B * H)
    throw std::runtime_error("build_targets: buffer size mismatch");
  std::vector<S> g(size_t(B) * H);
  for (int b = 0; b < B; b++) {
    double acc = 0, gpow = 1;
    for (int h = 1; h <= H; h++) {
      size_t i = size_t(b) * H + (h - 1);
      acc += gpow * double(rewards[i]);
      gpow *= gamma;
      double tgt = acc;
      if (ok[i]) tgt += gpow * boot[i];
      if (!std::isfinite(tgt))
        throw std::runtime_error("build_targets: non-finite target at offset h=" +
                                 std::to_string(h));
      g[i] = S(tgt);
    }
  }
  return g;
}

// Squared TD error against precomputed targets, restricted to the given
// 1-based heads, averaged over batch * heads and summed over ensemble
// members. heads {1..H} is the multi-horizon loss; a singleton {h} is the
// fixed-chunk baseline; with H=1 it reduces exactly to the single-step loss.
template <typename S>
int td_loss(Tape<S>& t, CriticEnsemble<S>& ens, int states, int chunks,
            const std::vector<S>& targets, const std::vector<int>& heads) {
  if (ens.members.empty()) throw std::runtime_error("td_loss: empty ensemble");
  if (heads.empty()) throw std::runtime_error("td_loss: no heads selected");
  const int H = ens.H(), B = t.shape(states)[0], nh = int(heads.size());
  bool full = (nh == H);
  for (int i = 0; i < nh; i++) {
    if (heads[i] < 1 || heads[i] > H)
      throw std::runtime_error("td_loss: head out of range: " + std::to_string(heads[i]));
    if (heads[i] != i + 1) full = false;
  }
  if (int(targets.size()) != B * nh)
    throw std::runtime_error("td_loss: target buffer size mismatch");
  int tgt = t.input({B, nh}, targets);
  int loss = -1;
  for (CriticMember<S>& m : ens.members) {
    int q = m.forward(t, states, chunks);
    int sel = q;
    if (!full) {
      std::vector<int> cols;
      for (int h : heads) cols.push_back(t.slice(q, 1, h - 1, 1));
      sel = cols.size() == 1 ? cols[0] : t.concat(cols, 1);
    }
    int l = t.scale(t.squared_error_sum(sel, tgt), 1.0 / (double(B) * nh));
    loss = loss < 0 ? l : t.add(loss, l);
  }
  return loss;
}

}  // namespace acsac
