#pragma once
// Chunked flow-matching behavior policy: an MLP velocity field over
// length-H action chunks conditioned on state and flow time, trained with
// the flow-matching regression and sampled by Euler integration. Chunks are
// standardized per action dimension with dataset statistics fixed at
// construction; sampling inverts the transform and clips to action bounds.
#include "acsac/mlp.hpp"
#include "acsac/rng.hpp"
#include "acsac/tensor.hpp"

#include <stdexcept>
#include <vector>

namespace acsac {

template <typename S>
struct FlowPolicy {
  int obs_dim = 0, act_dim = 0, H = 0, F = 10;
  Mlp<S> net;  // [obs + H*act + 1] -> [H*act]
  std::vector<double> act_mean, act_std;  // act_dim, std floored at 1e-6
  double act_bound = 1.0;

  FlowPolicy() = default;
  FlowPolicy(int obs, int act, int H_, int F_, const std::vector<int>& hidden,
             const std::vector<double>& mean, const std::vector<double>& std,
             double bound, RngStream& rng)
      : obs_dim(obs), act_dim(act), H(H_), F(F_),
        net("flow", obs + H_ * act + 1, hidden, H_ * act, rng),
        act_mean(mean), act_std(std), act_bound(bound) {
    if (int(mean.size()) != act || int(std.size()) != act)
      throw std::runtime_error("flow: normalization stats must have act_dim entries");
    for (double& sd : act_std)
      if (sd < 1e-6) sd = 1e-6;
  }

  std::vector<Param<S>*> params() { return net.params(); }

  int chunk_dim() const { return H * act_dim; }

  void normalize_chunk(const S* raw, S* out) const {
    for (int i = 0; i < chunk_dim(); i++) {
      int d = i % act_dim;
      out[i] = S((double(raw[i]) - act_mean[d]) / act_std[d]);
    }
  }

  // Flow-matching loss on a batch: states [B, obs], chunks [B, H*act] in raw
  // action units. Draws z ~ N(0, I) and u ~ U[0,1) per sample from rng and
  // returns mean over the batch of |v(u, s, a_z) - (a - z)|^2.
  int bc_loss(Tape<S>& tape, const std::vector<S>& states,
              const std::vector<S>& chunks, int B, RngStream& rng) {
    std::vector<S> z(size_t(B) * chunk_dim());
    std::vector<S> u(static_cast<size_t>(B));
    for (int b = 0; b < B; b++) {
      u[b] = S(rng.uniform());
      for (int i = 0; i < chunk_dim(); i++)
        z[size_t(b) * chunk_dim() + i] = S(rng.gaussian());
    }
    return bc_loss_at(tape, states, chunks, B, z, u);
  }

  // Same loss at caller-chosen (z, u); the random path above delegates here.
  int bc_loss_at(Tape<S>& tape, const std::vector<S>& states,
                 const std::vector<S>& chunks, int B, const std::vector<S>& z,
                 const std::vector<S>& u) {
    const int D = chunk_dim();
    if (int(states.size()) != B * obs_dim || int(chunks.size()) != B * D ||
        int(z.size()) != B * D || int(u.size()) != B)
      throw std::runtime_error("flow bc_loss: batch buffer size mismatch");
    const int in_dim = obs_dim + D + 1;
    std::vector<S> in(size_t(B) * in_dim), target(size_t(B) * D);
    std::vector<S> a_norm(D);
    for (int b = 0; b < B; b++) {
      normalize_chunk(chunks.data() + size_t(b) * D, a_norm.data());
      S* row = in.data() + size_t(b) * in_dim;
      for (int i = 0; i < obs_dim; i++) row[i] = states[size_t(b) * obs_dim + i];
      double ub = double(u[b]);
      for (int i = 0; i < D; i++) {
        double zi = double(z[size_t(b) * D + i]);
        row[obs_dim + i] = S((1.0 - ub) * zi + ub * double(a_norm[i]));
        target[size_t(b) * D + i] = S(double(a_norm[i]) - zi);
      }
      row[obs_dim + D] = S(ub);
    }
    int v = net.forward(tape, tape.input({B, in_dim}, in));
    return tape.scale(tape.squared_error_sum(v, tape.input({B, D}, target)),
                      1.0 / B);
  }

  // Euler sampler: M chunks for M states, one noise draw per chunk from rng.
  // Returns raw, bound-clipped chunks [M, H*act]. Deterministic given the
  // rng state.
  std::vector<S> sample(const std::vector<S>& states, int M, RngStream& rng) {
    const int D = chunk_dim();
    if (int(states.size()) != M * obs_dim)
      throw std::runtime_error("flow sample: state buffer size mismatch");
    std::vector<S> x(size_t(M) * D);
    for (S& v : x) v = S(rng.gaussian());
    const int in_dim = obs_dim + D + 1;
    std::vector<S> in(size_t(M) * in_dim);
    Tape<S> tape(false);
    for (int step = 0; step < F; step++) {
      S u = S(double(step) / F);
      for (int m = 0; m < M; m++) {
        S* row = in.data() + size_t(m) * in_dim;
        std::memcpy(row, states.data() + size_t(m) * obs_dim, sizeof(S) * obs_dim);
        std::memcpy(row + obs_dim, x.data() + size_t(m) * D, sizeof(S) * D);
        row[obs_dim + D] = u;
      }
      int v = net.forward(tape, tape.input({M, in_dim}, in), true);
      const S* pv = tape.val(v);
      const S h = S(1.0 / F);
      for (size_t i = 0; i < x.size(); i++) x[i] += h * pv[i];
      tape.clear();
    }
    for (int m = 0; m < M; m++)
      for (int i = 0; i < D; i++) {
        int d = i % act_dim;
        double a = double(x[size_t(m) * D + i]) * act_std[d] + act_mean[d];
        x[size_t(m) * D + i] = S(std::min(std::max(a, -act_bound), act_bound));
      }
    return x;
  }
};

}  // namespace acsac
