#pragma once
// Adaptive policy extraction: draw N candidate chunks from the flow policy,
// score every (candidate, horizon) prefix with the ensemble-min critic in one
// forward pass per member, and execute the argmax prefix. Ties resolve
// lexicographically (smallest n, then smallest h), which a strict-> scan in
// row-major order gives for free. The batched value path is shared with TD
// bootstrapping, where every window contributes H next-states at once.
#include "acsac/critic.hpp"
#include "acsac/flow.hpp"
#include "acsac/rng.hpp"

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace acsac {

// Ensemble-min scores [rows, H] for pre-replicated states [rows, obs] and
// chunks [rows, H*act]; one critic forward per member, all heads reused.
template <typename S>
std::vector<S> score_candidates(CriticEnsemble<S>& critic,
                                const std::vector<S>& states,
                                const std::vector<S>& chunks, int rows) {
  if (critic.members.empty()) throw std::runtime_error("extract: empty ensemble");
  CriticMember<S>& m0 = critic.members[0];
  Tape<S> t(false);
  int s = t.input({rows, m0.obs_dim}, states);
  int c = t.input({rows, m0.H * m0.act_dim}, chunks);
  std::vector<S> best;
  for (CriticMember<S>& m : critic.members) {
    std::vector<S> q = t.values(m.forward(t, s, c, true));
    if (best.empty())
      best = std::move(q);
    else
      for (size_t i = 0; i < best.size(); i++) best[i] = std::min(best[i], q[i]);
  }
  return best;
}

struct ArgmaxOut {
  int n = 1, h = 1;  // 1-based
  double value = 0;
};

// Argmax over a [N, H] score matrix restricted to the given 1-based horizons.
inline std::vector<uint8_t> head_mask(int H, const std::vector<int>& heads) {
  if (heads.empty()) throw std::runtime_error("extract: no horizons admitted");
  std::vector<uint8_t> mask(static_cast<size_t>(H), 0);
  for (int h : heads) {
    if (h < 1 || h > H)
      throw std::runtime_error("extract: horizon out of range: " + std::to_string(h));
    mask[size_t(h - 1)] = 1;
  }
  return mask;
}

template <typename S>
ArgmaxOut argmax_scores(const std::vector<S>& scores, int N, int H,
                        const std::vector<int>& heads) {
  if (int(scores.size()) != N * H)
    throw std::runtime_error("extract: score matrix size mismatch");
  std::vector<uint8_t> mask = head_mask(H, heads);
  ArgmaxOut out;
  double best = -std::numeric_limits<double>::infinity();
  for (int n = 0; n < N; n++)
    for (int h = 1; h <= H; h++) {
      if (!mask[size_t(h - 1)]) continue;
      double v = double(scores[size_t(n) * H + (h - 1)]);
      if (v > best) {
        best = v;
        out.n = n + 1;
        out.h = h;
      }
    }
  out.value = best;
  return out;
}

template <typename S>
struct ExtractOut {
  std::vector<S> chunk;   // winning chunk, H*act raw actions
  std::vector<S> prefix;  // first h_star rows of it
  int n_star = 1, h_star = 1;
  double value = 0;
  std::vector<S> scores;  // [N, H] ensemble-min
};

namespace detail {

template <typename S>
void check_compatible(const CriticEnsemble<S>& critic, const FlowPolicy<S>& flow) {
  const CriticMember<S>& m = critic.members.at(0);
  if (m.obs_dim != flow.obs_dim || m.act_dim != flow.act_dim || m.H != flow.H)
    throw std::runtime_error("extract: critic/flow dimension mismatch");
}

template <typename S>
std::vector<S> replicate(const std::vector<S>& states, int M, int obs, int times) {
  if (int(states.size()) != M * obs)
    throw std::runtime_error("extract: state buffer size mismatch");
  std::vector<S> rep(size_t(M) * times * obs);
  for (int m = 0; m < M; m++)
    for (int r = 0; r < times; r++)
      std::copy(states.begin() + size_t(m) * obs, states.begin() + size_t(m + 1) * obs,
                rep.begin() + (size_t(m) * times + r) * obs);
  return rep;
}

template <typename S>
ExtractOut<S> extract_heads(CriticEnsemble<S>& critic, FlowPolicy<S>& flow,
                            const std::vector<S>& state, int N,
                            const std::vector<int>& heads, RngStream& rng) {
  check_compatible(critic, flow);
  if (N < 1) throw std::runtime_error("extract: need at least one candidate");
  const int act = flow.act_dim, H = flow.H;
  std::vector<S> rep = replicate(state, 1, flow.obs_dim, N);
  ExtractOut<S> out;
  std::vector<S> chunks = flow.sample(rep, N, rng);
  out.scores = score_candidates(critic, rep, chunks, N);
  ArgmaxOut am = argmax_scores(out.scores, N, H, heads);
  out.n_star = am.n;
  out.h_star = am.h;
  out.value = am.value;
  size_t off = size_t(am.n - 1) * H * act;
  out.chunk.assign(chunks.begin() + off, chunks.begin() + off + size_t(H) * act);
  out.prefix.assign(out.chunk.begin(), out.chunk.begin() + size_t(am.h) * act);
  return out;
}

}  // namespace detail

// Joint (n, h) search over all N*H prefixes.
template <typename S>
ExtractOut<S> extract(CriticEnsemble<S>& critic, FlowPolicy<S>& flow,
                      const std::vector<S>& state, int N, RngStream& rng) {
  std::vector<int> heads(static_cast<size_t>(flow.H));
  for (int h = 1; h <= flow.H; h++) heads[size_t(h - 1)] = h;
  return detail::extract_heads(critic, flow, state, N, heads, rng);
}

// Rejection sampling at a fixed chunk length: argmax over n in column h only.
template <typename S>
ExtractOut<S> extract_fixed_h(CriticEnsemble<S>& critic, FlowPolicy<S>& flow,
                              const std::vector<S>& state, int N, int h,
                              RngStream& rng) {
  if (h < 1 || h > flow.H)
    throw std::runtime_error("extract: fixed h out of range: " + std::to_string(h));
  return detail::extract_heads(critic, flow, state, N, {h}, rng);
}

// Batched extraction values for TD bootstrapping: for each of the M states,
// N flow candidates scored by the given (stop-gradient or target) ensemble,
// max over the admitted horizons. Candidate noise is drawn state-major, so
// the m-th segment of the stream matches a standalone extract at state m.
template <typename S>
std::vector<double> extraction_values(CriticEnsemble<S>& critic, FlowPolicy<S>& flow,
                                      const std::vector<S>& states, int M, int N,
                                      const std::vector<int>& heads, RngStream& rng) {
  detail::check_compatible(critic, flow);
  if (N < 1) throw std::runtime_error("extract: need at least one candidate");
  const int H = flow.H;
  std::vector<uint8_t> mask = head_mask(H, heads);
  std::vector<S> rep = detail::replicate(states, M, flow.obs_dim, N);
  std::vector<S> chunks = flow.sample(rep, M * N, rng);
  std::vector<S> scores = score_candidates(critic, rep, chunks, M * N);
  std::vector<double> values(static_cast<size_t>(M));
  for (int m = 0; m < M; m++) {
    double best = -std::numeric_limits<double>::infinity();
    for (int n = 0; n < N; n++)
      for (int h = 1; h <= H; h++) {
        if (!mask[size_t(h - 1)]) continue;
        best = std::max(best, double(scores[(size_t(m) * N + n) * H + (h - 1)]));
      }
    values[size_t(m)] = best;
  }
  return values;
}

}  // namespace acsac
