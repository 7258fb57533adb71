#include "acsac/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace acsac {

void Dataset::begin_episode(const float* s0) {
  if (open_) throw std::runtime_error("dataset: begin_episode with an episode still open");
  Episode ep;
  ep.states.assign(s0, s0 + meta.obs_dim);
  episodes.push_back(std::move(ep));
  open_ = true;
}

void Dataset::append_transition(const float* a, float r, const float* s_next, bool done) {
  if (!open_) throw std::runtime_error("dataset: append_transition without an open episode");
  Episode& ep = episodes.back();
  ep.actions.insert(ep.actions.end(), a, a + meta.action_dim);
  ep.rewards.push_back(r);
  ep.done.push_back(done ? 1 : 0);
  ep.states.insert(ep.states.end(), s_next, s_next + meta.obs_dim);
  ep.len++;
  if (done) ep.terminated = true;
  transitions_++;
}

void Dataset::seal_episode() {
  if (!open_) throw std::runtime_error("dataset: seal_episode without an open episode");
  if (episodes.back().len == 0) {  // nothing happened; drop it
    episodes.pop_back();
  } else {
    meta.num_episodes = int(episodes.size());
  }
  open_ = false;
}

void Dataset::recount() {
  transitions_ = 0;
  for (const Episode& ep : episodes) transitions_ += ep.len;
  meta.num_episodes = int(episodes.size());
}

void compute_action_stats(Dataset& ds) {
  int d = ds.meta.action_dim;
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  int64_t n = 0;
  for (const Episode& ep : ds.episodes)
    for (int t = 0; t < ep.len; t++)
      for (int j = 0; j < d; j++) mean[j] += double(ep.actions[t * d + j]);
  for (const Episode& ep : ds.episodes) n += ep.len;
  if (n == 0) throw std::runtime_error("dataset: no transitions, cannot compute action stats");
  for (int j = 0; j < d; j++) mean[j] /= double(n);
  for (const Episode& ep : ds.episodes)
    for (int t = 0; t < ep.len; t++)
      for (int j = 0; j < d; j++) {
        double e = double(ep.actions[t * d + j]) - mean[j];
        var[j] += e * e;
      }
  ds.meta.action_mean = mean;
  ds.meta.action_std.assign(d, 1.0);
  for (int j = 0; j < d; j++) ds.meta.action_std[j] = std::max(std::sqrt(var[j] / double(n)), 1e-6);
}

namespace {

// Full-speed pursuit: direction-preserving scale so the sup-norm stays
// within the action bound.
void pursue(const double* pos, const double* target, double bound, double* out) {
  double vx = target[0] - pos[0], vy = target[1] - pos[1];
  double m = std::max(std::abs(vx), std::abs(vy));
  double s = m > bound ? bound / m : 1.0;
  out[0] = vx * s;
  out[1] = vy * s;
}

const double kWaypoints[2][2] = {{1.0, 6.8}, {7.5, 7.5}};
constexpr int kNumWaypoints = 2;
constexpr double kAdvanceRadius = 0.5;

}  // namespace

void controller_action(const MazeSpec& env, const double* pos, int* wp_index, double* out) {
  while (*wp_index < kNumWaypoints - 1) {
    double dx = pos[0] - kWaypoints[*wp_index][0], dy = pos[1] - kWaypoints[*wp_index][1];
    if (std::sqrt(dx * dx + dy * dy) > kAdvanceRadius) break;
    (*wp_index)++;
  }
  pursue(pos, kWaypoints[*wp_index], env.action_bound, out);
}

Dataset generate_offline_data(const MazeSpec& env, const GenParams& gp, uint64_t seed) {
  Dataset ds;
  ds.meta.env_id = "lmaze";
  ds.meta.obs_dim = 2;
  ds.meta.action_dim = 2;
  ds.meta.seed = seed;
  RngStream rng(derive_seed(seed, 101));

  // Noise autocorrelation. The offset drifts instead of re-rolling per step,
  // so a window sliced anywhere from an episode carries one coherent
  // deviation: candidate chunks then read as alternative plans a critic can
  // rank, not white noise around the controller.
  constexpr double kNoiseRho = 0.85;
  const double kNoiseMix = std::sqrt(1.0 - kNoiseRho * kNoiseRho);

  for (int e = 0; e < gp.episodes; e++) {
    bool detour = rng.uniform() < gp.detour_prob;
    int detour_at = 2 + rng.uniform_int(15);    // trigger step, anywhere en route
    int detour_len = 3 + rng.uniform_int(5);
    double detour_target[2] = {0, 0};
    if (detour) {
      do {
        detour_target[0] = rng.uniform(env.xmin, env.xmax);
        detour_target[1] = rng.uniform(env.ymin, env.ymax);
      } while (!env.in_free_space(detour_target[0], detour_target[1]));
    }

    double pos[2] = {env.start[0], env.start[1]};
    float s0[2] = {float(pos[0]), float(pos[1])};
    ds.begin_episode(s0);
    int wp = 0;
    // stationary start, so the noise scale is gp.noise_sigma at every step
    double nz[2] = {gp.noise_sigma * rng.gaussian(), gp.noise_sigma * rng.gaussian()};
    for (int t = 0; t < env.max_steps; t++) {
      double a[2];
      if (detour && t >= detour_at && t < detour_at + detour_len) {
        pursue(pos, detour_target, env.action_bound, a);
      } else {
        controller_action(env, pos, &wp, a);
      }
      nz[0] = kNoiseRho * nz[0] + kNoiseMix * gp.noise_sigma * rng.gaussian();
      nz[1] = kNoiseRho * nz[1] + kNoiseMix * gp.noise_sigma * rng.gaussian();
      a[0] = std::clamp(a[0] + nz[0], -env.action_bound, env.action_bound);
      a[1] = std::clamp(a[1] + nz[1], -env.action_bound, env.action_bound);
      StepOut so = env_step(env, pos, a);
      float af[2] = {float(a[0]), float(a[1])};
      float sn[2] = {float(so.next[0]), float(so.next[1])};
      ds.append_transition(af, float(so.reward), sn, so.done);
      pos[0] = so.next[0];
      pos[1] = so.next[1];
      if (so.done) break;
    }
    ds.seal_episode();
  }
  compute_action_stats(ds);
  return ds;
}

void fill_window(const Dataset& ds, int e, int t, int H, Window* w) {
  const Episode& ep = ds.episodes[e];
  if (t < 0 || t >= ep.len) throw std::runtime_error("fill_window: start index out of range");
  int od = ds.meta.obs_dim, ad = ds.meta.action_dim;
  w->H = H;
  w->obs_dim = od;
  w->act_dim = ad;
  w->episode = e;
  w->t = t;
  w->states.assign(size_t(H + 1) * od, 0.f);
  w->actions.assign(size_t(H) * ad, 0.f);
  w->rewards.assign(size_t(H), 0.f);
  w->bootstrap_ok.assign(size_t(H), 0);
  w->real_len = std::min(H, ep.len - t);
  w->padded = t + H > ep.len;
  for (int i = 0; i <= H; i++) {
    int src = std::min(t + i, ep.len);  // repeat the final state past the end
    std::memcpy(&w->states[size_t(i) * od], &ep.states[size_t(src) * od], sizeof(float) * od);
  }
  for (int i = 0; i < w->real_len; i++) {
    std::memcpy(&w->actions[size_t(i) * ad], &ep.actions[size_t(t + i) * ad], sizeof(float) * ad);
    w->rewards[i] = ep.rewards[t + i];
  }
  for (int h = 1; h <= H; h++) {
    bool within = t + h < ep.len;
    bool at_end_unterminated = (t + h == ep.len) && !ep.terminated;
    w->bootstrap_ok[h - 1] = (within || at_end_unterminated) ? 1 : 0;
  }
}

Window sample_chunked_window(const Dataset& ds, int H, RngStream& rng) {
  if (ds.episodes.empty()) throw std::runtime_error("sample_chunked_window: empty dataset");
  int e = rng.uniform_int(int(ds.episodes.size()));
  for (int tries = 0; ds.episodes[e].len == 0; tries++) {  // open episode, no data yet
    if (tries > 100) throw std::runtime_error("sample_chunked_window: no transitions");
    e = rng.uniform_int(int(ds.episodes.size()));
  }
  int t = rng.uniform_int(ds.episodes[e].len);
  Window w;
  fill_window(ds, e, t, H, &w);
  return w;
}

}  // namespace acsac
